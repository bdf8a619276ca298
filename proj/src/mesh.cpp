#include "coupler/mesh.hpp"

#include "coupler/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace coupler {

namespace {

// Next non-comment token line reader for OFF files.
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

int find_root(std::vector<int>& parent, int v) {
  while (parent[v] != v) {
    parent[v] = parent[parent[v]];
    v = parent[v];
  }
  return v;
}

}  // namespace

double simplex_signed_measure(const Eigen::MatrixXd& corners) {
  const Eigen::Index d = corners.cols();
  Eigen::MatrixXd edges(d, d);
  for (Eigen::Index k = 0; k < d; ++k) edges.col(k) = (corners.row(k + 1) - corners.row(0)).transpose();
  double factorial = 1.0;
  for (Eigen::Index k = 2; k <= d; ++k) factorial *= static_cast<double>(k);
  return edges.determinant() / factorial;
}

Mesh make_mesh(int dim, Eigen::MatrixXd vertices, Eigen::MatrixXi elements) {
  if (dim != 2 && dim != 3) throw MeshError("mesh dimension must be 2 or 3, got " + std::to_string(dim));
  if (vertices.cols() != dim) throw MeshError("vertex array has " + std::to_string(vertices.cols()) + " columns for a dim " + std::to_string(dim) + " mesh");
  if (elements.cols() != dim + 1) throw MeshError("element array must have dim+1 columns");
  const int n = static_cast<int>(vertices.rows());
  const int m = static_cast<int>(elements.rows());
  if (n == 0 || m == 0) throw MeshError("mesh has no vertices or no elements");

  for (int e = 0; e < m; ++e) {
    for (int k = 0; k <= dim; ++k) {
      const int v = elements(e, k);
      if (v < 0 || v >= n) {
        throw MeshError("element " + std::to_string(e) + " references vertex " + std::to_string(v) +
                        " outside [0, " + std::to_string(n) + ")");
      }
    }
  }

  // Degeneracy threshold relative to the bounding box.
  const double diag = (vertices.colwise().maxCoeff() - vertices.colwise().minCoeff()).norm();
  const double tiny = 1e-12 * std::pow(std::max(diag, 1e-300), dim);

  Eigen::MatrixXd corners(dim + 1, dim);
  int flipped = 0;
  for (int e = 0; e < m; ++e) {
    for (int k = 0; k <= dim; ++k) corners.row(k) = vertices.row(elements(e, k));
    const double measure = simplex_signed_measure(corners);
    if (std::abs(measure) <= tiny) {
      throw MeshError("degenerate element " + std::to_string(e) + " (signed measure " + std::to_string(measure) + ")");
    }
    if (measure < 0) {
      std::swap(elements(e, 1), elements(e, 2));
      ++flipped;
    }
  }
  if (flipped > 0) spdlog::warn("mesh: flipped {} inverted element(s) to positive orientation", flipped);

  // Connectivity: every vertex must be referenced and belong to one component.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<char> used(n, 0);
  for (int e = 0; e < m; ++e) {
    const int a = find_root(parent, elements(e, 0));
    used[elements(e, 0)] = 1;
    for (int k = 1; k <= dim; ++k) {
      used[elements(e, k)] = 1;
      const int b = find_root(parent, elements(e, k));
      if (a != b) parent[b] = a;
    }
  }
  for (int v = 0; v < n; ++v) {
    if (!used[v]) throw MeshError("vertex " + std::to_string(v) + " is not referenced by any element (disconnected mesh)");
  }
  const int root = find_root(parent, 0);
  for (int v = 1; v < n; ++v) {
    if (find_root(parent, v) != root) {
      throw MeshError("mesh is disconnected: vertex " + std::to_string(v) + " is not connected to vertex 0");
    }
  }

  Mesh mesh;
  mesh.dim_ = dim;
  mesh.vertices_ = std::move(vertices);
  mesh.elements_ = std::move(elements);

  mesh.adjacency_.assign(n, {});
  for (int e = 0; e < m; ++e) {
    for (int a = 0; a <= dim; ++a) {
      for (int b = 0; b <= dim; ++b) {
        if (a != b) mesh.adjacency_[mesh.elements_(e, a)].push_back(mesh.elements_(e, b));
      }
    }
  }
  for (auto& nbrs : mesh.adjacency_) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }

  if (dim == 2) {
    // Directed edge of each triangle; a facet is boundary iff it is used once.
    std::map<std::pair<int, int>, std::pair<int, std::array<int, 2>>> incidence;
    for (int e = 0; e < m; ++e) {
      for (int k = 0; k < 3; ++k) {
        const int a = mesh.elements_(e, k);
        const int b = mesh.elements_(e, (k + 1) % 3);
        auto& slot = incidence[{std::min(a, b), std::max(a, b)}];
        ++slot.first;
        slot.second = {a, b};
        if (slot.first > 2) {
          throw MeshError("non-manifold edge (" + std::to_string(a) + ", " + std::to_string(b) +
                          ") shared by more than two elements, last element " + std::to_string(e));
        }
      }
    }
    for (const auto& [key, slot] : incidence) {
      if (slot.first == 1) mesh.boundary_edges_.push_back(slot.second);
    }
    for (const auto& edge : mesh.boundary_edges_) {
      mesh.boundary_vertices_.push_back(edge[0]);
      mesh.boundary_vertices_.push_back(edge[1]);
    }
    std::sort(mesh.boundary_vertices_.begin(), mesh.boundary_vertices_.end());
    mesh.boundary_vertices_.erase(std::unique(mesh.boundary_vertices_.begin(), mesh.boundary_vertices_.end()),
                                  mesh.boundary_vertices_.end());
  }
  return mesh;
}

Mesh read_off(std::istream& in) {
  std::string line;
  if (!next_line(in, line)) throw ParseError("OFF: empty input");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw ParseError("OFF: expected header 'OFF', got '" + magic + "'");

  long nv = -1;
  long nf = -1;
  long ne = 0;
  // Counts may follow the magic on the same line.
  if (!(header >> nv)) {
    if (!next_line(in, line)) throw ParseError("OFF: missing vertex/face counts");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf)) throw ParseError("OFF: malformed count line '" + line + "'");
    counts >> ne;
  } else if (!(header >> nf)) {
    throw ParseError("OFF: malformed count line");
  }
  if (nv <= 0 || nf <= 0) throw ParseError("OFF: vertex and face counts must be positive");

  Eigen::MatrixXd xyz(nv, 3);
  for (long v = 0; v < nv; ++v) {
    if (!next_line(in, line)) throw ParseError("OFF: file ends before vertex " + std::to_string(v));
    std::istringstream row(line);
    double x = 0, y = 0, z = 0;
    if (!(row >> x >> y)) throw ParseError("OFF: malformed vertex " + std::to_string(v) + ": '" + line + "'");
    row >> z;
    xyz.row(v) << x, y, z;
  }

  Eigen::MatrixXi faces(nf, 3);
  for (long f = 0; f < nf; ++f) {
    if (!next_line(in, line)) throw ParseError("OFF: file ends before face " + std::to_string(f));
    std::istringstream row(line);
    int count = 0;
    if (!(row >> count)) throw ParseError("OFF: malformed face " + std::to_string(f));
    if (count != 3) throw ParseError("OFF: face " + std::to_string(f) + " has " + std::to_string(count) + " vertices; only triangles are supported");
    if (!(row >> faces(f, 0) >> faces(f, 1) >> faces(f, 2))) {
      throw ParseError("OFF: malformed face " + std::to_string(f) + ": '" + line + "'");
    }
  }

  if (xyz.col(2).cwiseAbs().maxCoeff() != 0.0) {
    throw ParseError("OFF: triangle meshes must be planar with z = 0 (surface meshes are not simulated)");
  }
  return make_mesh(2, xyz.leftCols(2), faces);
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file " + path.string());
  try {
    return read_off(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_off(std::ostream& out, const Mesh& mesh, const Eigen::MatrixXd& positions) {
  if (mesh.dim() != 2) throw MeshError("write_off supports triangle meshes only");
  out << "OFF\n" << positions.rows() << ' ' << mesh.element_count() << " 0\n";
  out.precision(17);
  for (Eigen::Index v = 0; v < positions.rows(); ++v) {
    out << positions(v, 0) << ' ' << positions(v, 1) << ' ' << (positions.cols() > 2 ? positions(v, 2) : 0.0) << '\n';
  }
  for (int e = 0; e < mesh.element_count(); ++e) {
    out << "3 " << mesh.elements()(e, 0) << ' ' << mesh.elements()(e, 1) << ' ' << mesh.elements()(e, 2) << '\n';
  }
}

void write_off(const std::filesystem::path& path, const Mesh& mesh, const Eigen::MatrixXd& positions) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_off(out, mesh, positions);
}

void write_off(const std::filesystem::path& path, const Mesh& mesh) { write_off(path, mesh, mesh.vertices()); }

double element_rest_measure(const Mesh& mesh, int e) {
  const int d = mesh.dim();
  Eigen::MatrixXd corners(d + 1, d);
  for (int k = 0; k <= d; ++k) corners.row(k) = mesh.vertices().row(mesh.elements()(e, k));
  return simplex_signed_measure(corners);
}

std::vector<std::vector<int>> boundary_loops(const Mesh& mesh) {
  std::map<int, std::vector<int>> next;
  for (const auto& edge : mesh.boundary_edges()) next[edge[0]].push_back(edge[1]);
  std::map<std::pair<int, int>, bool> visited;
  std::vector<std::vector<int>> loops;
  for (const auto& edge : mesh.boundary_edges()) {
    if (visited[{edge[0], edge[1]}]) continue;
    std::vector<int> loop;
    int a = edge[0];
    int b = edge[1];
    while (!visited[{a, b}]) {
      visited[{a, b}] = true;
      loop.push_back(a);
      int following = -1;
      for (int c : next[b]) {
        if (!visited[{b, c}]) {
          following = c;
          break;
        }
      }
      if (following < 0) break;
      a = b;
      b = following;
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

int LaplacianMatrix::local_index(int v) const {
  auto it = std::lower_bound(boundary_vertices.begin(), boundary_vertices.end(), v);
  if (it == boundary_vertices.end() || *it != v) return -1;
  return static_cast<int>(it - boundary_vertices.begin());
}

LaplacianMatrix build_editing_laplacian(const Mesh& mesh) {
  if (mesh.dim() != 2) throw MeshError("editing Laplacian requires a triangle mesh");
  LaplacianMatrix lap;
  lap.boundary_vertices = mesh.boundary_vertices();
  const int nb = static_cast<int>(lap.boundary_vertices.size());
  if (nb < 3) throw MeshError("editing Laplacian needs at least 3 boundary vertices");

  std::vector<std::vector<int>> nbrs(nb);
  for (const auto& edge : mesh.boundary_edges()) {
    const int a = lap.local_index(edge[0]);
    const int b = lap.local_index(edge[1]);
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < nb; ++i) {
    triplets.emplace_back(i, i, 1.0);
    const double w = 1.0 / static_cast<double>(nbrs[i].size());
    for (int j : nbrs[i]) triplets.emplace_back(i, j, -w);
  }
  lap.matrix.resize(nb, nb);
  lap.matrix.setFromTriplets(triplets.begin(), triplets.end());
  lap.gram = Eigen::SparseMatrix<double>(lap.matrix.transpose()) * lap.matrix;
  lap.gram.makeCompressed();
  return lap;
}

Eigen::SparseMatrix<double> cotangent_laplacian(const Mesh& mesh) {
  if (mesh.dim() != 2) throw MeshError("cotangent Laplacian requires a triangle mesh");
  const int n = mesh.vertex_count();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int e = 0; e < mesh.element_count(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const int i = mesh.elements()(e, k);
      const int j = mesh.elements()(e, (k + 1) % 3);
      const int o = mesh.elements()(e, (k + 2) % 3);
      const Eigen::Vector2d u = mesh.vertex2(i) - mesh.vertex2(o);
      const Eigen::Vector2d w = mesh.vertex2(j) - mesh.vertex2(o);
      const double cross = u.x() * w.y() - u.y() * w.x();
      const double half_cot = 0.5 * u.dot(w) / std::abs(cross);
      triplets.emplace_back(i, j, half_cot);
      triplets.emplace_back(j, i, half_cot);
      triplets.emplace_back(i, i, -half_cot);
      triplets.emplace_back(j, j, -half_cot);
    }
  }
  Eigen::SparseMatrix<double> lap(n, n);
  lap.setFromTriplets(triplets.begin(), triplets.end());
  return lap;
}

Eigen::VectorXd lumped_mass(const Mesh& mesh) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(mesh.vertex_count());
  const double share = 1.0 / (mesh.dim() + 1);
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double measure = element_rest_measure(mesh, e);
    for (int k = 0; k <= mesh.dim(); ++k) mass[mesh.elements()(e, k)] += share * measure;
  }
  return mass;
}

}  // namespace coupler
