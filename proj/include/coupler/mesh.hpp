#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace coupler {

// Simplicial rest geometry of the compliant part. Vertices are rows of
// `vertices` (millimeters); elements are rows of `elements`, triangles for
// dim 2 and tetrahedra for dim 3, always positively oriented.
//
// Construct through make_mesh / load_mesh, which validate and derive the
// boundary. A Mesh is immutable after construction.
class Mesh {
 public:
  Mesh() = default;

  int dim() const { return dim_; }
  int vertex_count() const { return static_cast<int>(vertices_.rows()); }
  int element_count() const { return static_cast<int>(elements_.rows()); }

  const Eigen::MatrixXd& vertices() const { return vertices_; }
  const Eigen::MatrixXi& elements() const { return elements_; }

  // Boundary facets for dim 2, oriented so the material lies to the left of
  // (a -> b). Empty for dim 3.
  const std::vector<std::array<int, 2>>& boundary_edges() const { return boundary_edges_; }

  // Sorted, unique vertices touched by boundary_edges().
  const std::vector<int>& boundary_vertices() const { return boundary_vertices_; }

  // Vertex-vertex adjacency through element edges, sorted per vertex.
  const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }

  Eigen::Vector2d vertex2(int v) const { return vertices_.row(v).head<2>().transpose(); }

 private:
  friend Mesh make_mesh(int dim, Eigen::MatrixXd vertices, Eigen::MatrixXi elements);

  int dim_ = 2;
  Eigen::MatrixXd vertices_;
  Eigen::MatrixXi elements_;
  std::vector<std::array<int, 2>> boundary_edges_;
  std::vector<int> boundary_vertices_;
  std::vector<std::vector<int>> adjacency_;
};

// Validates and builds a mesh. Inverted elements are flipped with a warning;
// degenerate elements, out-of-range indices, non-manifold facets and
// disconnected input raise MeshError naming the offending indices.
Mesh make_mesh(int dim, Eigen::MatrixXd vertices, Eigen::MatrixXi elements);

// OFF triangle mesh. Files whose z coordinates are all zero load as dim 2.
Mesh read_off(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);

// Writes the mesh connectivity with the given positions (defaults to the rest
// positions). Positions may be dim 2; z is written as 0.
void write_off(std::ostream& out, const Mesh& mesh, const Eigen::MatrixXd& positions);
void write_off(const std::filesystem::path& path, const Mesh& mesh, const Eigen::MatrixXd& positions);
void write_off(const std::filesystem::path& path, const Mesh& mesh);

// Rest area (dim 2) or volume (dim 3) of element e.
double element_rest_measure(const Mesh& mesh, int e);

// Signed area/volume of a simplex given as rows of `corners`.
double simplex_signed_measure(const Eigen::MatrixXd& corners);

// Closed boundary loops (dim 2), each listed in boundary-edge order.
std::vector<std::vector<int>> boundary_loops(const Mesh& mesh);

// Uniform-weight Laplacian over boundary vertices and its Gram matrix
// M_L = L^T L used by the editing energy. Row/column k refers to
// boundary_vertices[k].
struct LaplacianMatrix {
  std::vector<int> boundary_vertices;
  Eigen::SparseMatrix<double> matrix;
  Eigen::SparseMatrix<double> gram;

  // Index of vertex v in boundary_vertices, or -1.
  int local_index(int v) const;
};

LaplacianMatrix build_editing_laplacian(const Mesh& mesh);

// Cotangent Laplacian (negative semidefinite convention: L_ii = -sum of
// off-diagonals) and lumped vertex areas over the whole triangle mesh.
Eigen::SparseMatrix<double> cotangent_laplacian(const Mesh& mesh);
Eigen::VectorXd lumped_mass(const Mesh& mesh);

}  // namespace coupler
