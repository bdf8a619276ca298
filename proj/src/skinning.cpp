#include "coupler/skinning.hpp"

#include "coupler/error.hpp"
#include "coupler/qp.hpp"

#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>

namespace coupler {

namespace {

void check_handles(const Mesh& mesh, const std::vector<Handle>& handles) {
  if (handles.empty()) throw Error("skinning needs at least one handle");
  std::set<int> seen;
  for (const auto& h : handles) {
    if (h.vertex < 0 || h.vertex >= mesh.vertex_count()) {
      throw Error("handle vertex " + std::to_string(h.vertex) + " out of range");
    }
    if (!seen.insert(h.vertex).second) throw Error("duplicate handle vertex " + std::to_string(h.vertex));
  }
}

int nearest_vertex(const Mesh& mesh, const std::vector<int>& candidates, const Eigen::Vector2d& p) {
  int best = candidates.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (int v : candidates) {
    const double d = (mesh.vertex2(v) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

// All-pairs shortest paths over the vertex graph, edge cost |d_a - d_b|.
Eigen::MatrixXd graph_distances(const Mesh& mesh, const Eigen::VectorXd& value) {
  const int n = mesh.vertex_count();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  for (int s = 0; s < n; ++s) {
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist(s, s) = 0.0;
    queue.emplace(0.0, s);
    while (!queue.empty()) {
      const auto [d, v] = queue.top();
      queue.pop();
      if (d > dist(s, v)) continue;
      for (int w : mesh.adjacency()[v]) {
        const double nd = d + std::abs(value[v] - value[w]);
        if (nd < dist(s, w)) {
          dist(s, w) = nd;
          queue.emplace(nd, w);
        }
      }
    }
  }
  return dist;
}

std::vector<int> compact_labels(const std::vector<int>& exemplar) {
  std::map<int, int> ids;
  std::vector<int> labels(exemplar.size());
  for (std::size_t i = 0; i < exemplar.size(); ++i) {
    auto [it, inserted] = ids.try_emplace(exemplar[i], static_cast<int>(ids.size()));
    labels[i] = it->second;
  }
  return labels;
}

}  // namespace

Eigen::MatrixXd compute_bbw(const Mesh& mesh, const std::vector<Handle>& handles) {
  if (mesh.dim() != 2) throw Error("bounded biharmonic weights are implemented for triangle meshes");
  check_handles(mesh, handles);
  const int n = mesh.vertex_count();
  const auto m = static_cast<int>(handles.size());

  const Eigen::SparseMatrix<double> lap = cotangent_laplacian(mesh);
  const Eigen::VectorXd mass = lumped_mass(mesh);
  Eigen::SparseMatrix<double> q = lap.transpose() * mass.cwiseInverse().asDiagonal() * lap;
  q = 0.5 * (q + Eigen::SparseMatrix<double>(q.transpose()));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);

  Eigen::MatrixXd w(n, m);
  for (int j = 0; j < m; ++j) {
    std::vector<std::pair<int, double>> pinned;
    for (int k = 0; k < m; ++k) pinned.emplace_back(handles[k].vertex, k == j ? 1.0 : 0.0);
    const BoxQpResult r = solve_box_qp(q, zero, 0.0, 1.0, pinned);
    if (!r.converged) throw Error("bounded biharmonic weights: QP did not converge for handle " + std::to_string(j));
    w.col(j) = r.solution;
  }

  for (int i = 0; i < n; ++i) {
    const double sum = w.row(i).sum();
    if (sum > 0.0) {
      w.row(i) /= sum;
    } else {
      // No handle reaches this vertex: give it to the nearest one.
      std::vector<int> verts;
      for (const auto& h : handles) verts.push_back(h.vertex);
      const int v = nearest_vertex(mesh, verts, mesh.vertex2(i));
      w.row(i).setZero();
      for (int j = 0; j < m; ++j) {
        if (handles[j].vertex == v) w(i, j) = 1.0;
      }
    }
  }
  return w;
}

Eigen::MatrixXd lbs_matrix(const Mesh& mesh, const Eigen::MatrixXd& weights) {
  const int n = mesh.vertex_count();
  const auto m = weights.cols();
  Eigen::MatrixXd out(n, 3 * m);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = mesh.vertex2(i);
    for (Eigen::Index j = 0; j < m; ++j) {
      out(i, 3 * j) = weights(i, j) * x.x();
      out(i, 3 * j + 1) = weights(i, j) * x.y();
      out(i, 3 * j + 2) = weights(i, j);
    }
  }
  return out;
}

std::vector<int> HandleSet::active_indices() const {
  std::vector<int> out;
  for (int j = 0; j < size(); ++j) {
    if (handles[j].active) out.push_back(j);
  }
  return out;
}

HandleSet make_handle_set(const Mesh& mesh, std::vector<Handle> handles) {
  HandleSet set;
  set.weights = compute_bbw(mesh, handles);
  set.blend = lbs_matrix(mesh, set.weights);
  set.handles = std::move(handles);
  return set;
}

Eigen::MatrixXd stack_transforms(const Mesh& mesh, const HandleSet& set, const HandleTransforms& t) {
  if (static_cast<int>(t.size()) != set.size()) throw Error("one transform per handle expected");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * set.size(), 2);
  for (int j = 0; j < set.size(); ++j) {
    Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    if (set.handles[j].active) {
      if (!(t[j].scale.minCoeff() > 0.0)) throw Error("handle scales must be > 0");
      const Eigen::Vector2d c = mesh.vertex2(set.handles[j].vertex);
      a = t[j].scale.asDiagonal();
      b = c - a * c + t[j].translation;
    }
    out.block<2, 2>(3 * j, 0) = a.transpose();
    out.block<1, 2>(3 * j + 2, 0) = b.transpose();
  }
  return out;
}

Eigen::MatrixXd apply_handles(const Mesh& mesh, const HandleSet& set, const HandleTransforms& t) {
  Eigen::MatrixXd delta = stack_transforms(mesh, set, t);
  for (int j = 0; j < set.size(); ++j) delta.block<2, 2>(3 * j, 0) -= Eigen::Matrix2d::Identity();
  Eigen::MatrixXd x = mesh.vertices().leftCols<2>();
  x += set.blend * delta;
  return x;
}

std::vector<int> affinity_propagation(Eigen::MatrixXd s, const AffinitySettings& settings) {
  const auto n = s.rows();
  if (n == 0) return {};
  if (s.cols() != n) throw Error("affinity propagation needs a square similarity matrix");
  if (n == 1) return {0};

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (i == k) continue;
      lo = std::min(lo, s(i, k));
      hi = std::max(hi, s(i, k));
    }
  }
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
    // Indistinguishable points form one cluster.
    return std::vector<int>(static_cast<std::size_t>(n), 0);
  }

  std::mt19937_64 rng(settings.seed);
  std::normal_distribution<double> normal;
  const double scale = hi - lo;
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) s(i, k) += 1e-12 * scale * normal(rng);
  }

  // Message passing with the given damping; false when the exemplar set
  // never stayed fixed for convergence_iterations.
  std::vector<char> exemplar(static_cast<std::size_t>(n), 0);
  Eigen::MatrixXd r, a;
  auto run = [&](double lam) {
    r.setZero(n, n);
    a.setZero(n, n);
    std::vector<char> previous;
    int stable = 0;
    for (int it = 0; it < settings.max_iterations; ++it) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double first = -std::numeric_limits<double>::infinity(), second = first;
        Eigen::Index arg = 0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double v = a(i, k) + s(i, k);
          if (v > first) {
            second = first;
            first = v;
            arg = k;
          } else if (v > second) {
            second = v;
          }
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double fresh = s(i, k) - (k == arg ? second : first);
          r(i, k) = lam * r(i, k) + (1.0 - lam) * fresh;
        }
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        double col = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) col += i == k ? r(k, k) : std::max(0.0, r(i, k));
        for (Eigen::Index i = 0; i < n; ++i) {
          const double fresh = i == k ? col - r(k, k) : std::min(0.0, col - std::max(0.0, r(i, k)));
          a(i, k) = lam * a(i, k) + (1.0 - lam) * fresh;
        }
      }
      for (Eigen::Index k = 0; k < n; ++k) exemplar[k] = a(k, k) + r(k, k) > 0.0;
      stable = exemplar == previous ? stable + 1 : 0;
      previous = exemplar;
      if (stable >= settings.convergence_iterations && std::count(exemplar.begin(), exemplar.end(), 1) > 0) return true;
    }
    return false;
  };
  // Oscillating runs are retried with heavier damping.
  bool converged = false;
  for (double lam = settings.damping; !converged; lam = 1.0 - 0.5 * (1.0 - lam)) {
    converged = run(lam);
    if (!converged) spdlog::debug("affinity propagation: no convergence at damping {}", lam);
    if (lam > 0.97) break;
  }
  if (!converged) spdlog::warn("affinity propagation did not converge; using the last exemplar set");

  std::vector<int> centers;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (exemplar[k]) centers.push_back(static_cast<int>(k));
  }
  if (centers.empty()) {
    Eigen::Index best = 0;
    (a + r).diagonal().maxCoeff(&best);
    centers.push_back(static_cast<int>(best));
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = centers.front();
    for (int c : centers) {
      if (c == i) {
        best = c;
        break;
      }
      if (s(i, c) > s(i, best)) best = c;
    }
    out[i] = best;
  }
  return out;
}

Placement place_handles_displacement(const Mesh& mesh, const Eigen::VectorXd& max_displacement,
                                     const std::vector<FixedDof>& fixed, const AffinitySettings& settings) {
  const int n = mesh.vertex_count();
  if (max_displacement.size() != n) throw Error("one displacement per vertex expected");
  Eigen::MatrixXd sim = -graph_distances(mesh, max_displacement);
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      if (i != k) off.push_back(sim(i, k));
    }
  }
  double preference = 0.0;
  if (!off.empty()) {
    auto mid = off.begin() + static_cast<std::ptrdiff_t>(off.size() / 2);
    std::nth_element(off.begin(), mid, off.end());
    preference = *mid;
    if (off.size() % 2 == 0) {
      preference = 0.5 * (preference + *std::max_element(off.begin(), mid));
    }
  }
  sim.diagonal().setConstant(preference);

  Placement out;
  out.labels = compact_labels(affinity_propagation(std::move(sim), settings));
  const int clusters = *std::max_element(out.labels.begin(), out.labels.end()) + 1;

  std::set<int> fixed_vertices;
  for (const auto& fd : fixed) fixed_vertices.insert(fd.vertex);
  for (int c = 0; c < clusters; ++c) {
    std::vector<int> members;
    bool holds_fixed = false;
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (int v = 0; v < n; ++v) {
      if (out.labels[v] != c) continue;
      members.push_back(v);
      centroid += mesh.vertex2(v);
      holds_fixed = holds_fixed || fixed_vertices.count(v);
    }
    if (holds_fixed) continue;
    centroid /= static_cast<double>(members.size());
    out.handles.push_back({nearest_vertex(mesh, members, centroid), true});
  }
  if (out.handles.empty()) throw Error("handle placement: every cluster holds a displacement-constrained vertex");
  for (int v : fixed_vertices) out.handles.push_back({v, false});
  return out;
}

Placement place_handles_spatial(const Mesh& mesh, int k, std::uint64_t seed) {
  const int n = mesh.vertex_count();
  if (k < 1 || k > n) throw ConfigError("spatial handle count must be in [1, " + std::to_string(n) + "]");
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<int> medoids{static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng))};
  Eigen::VectorXd nearest(n);
  for (int v = 0; v < n; ++v) nearest[v] = (mesh.vertex2(v) - mesh.vertex2(medoids[0])).squaredNorm();
  while (static_cast<int>(medoids.size()) < k) {
    const double total = nearest.sum();
    int pick = -1;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (int v = 0; v < n; ++v) {
        if (nearest[v] <= 0.0) continue;
        pick = v;
        u -= nearest[v];
        if (u <= 0.0) break;
      }
    }
    if (pick < 0) {
      for (int v = 0; v < n && pick < 0; ++v) {
        if (std::find(medoids.begin(), medoids.end(), v) == medoids.end()) pick = v;
      }
    }
    medoids.push_back(pick);
    for (int v = 0; v < n; ++v) nearest[v] = std::min(nearest[v], (mesh.vertex2(v) - mesh.vertex2(pick)).squaredNorm());
  }

  std::vector<int> labels(n, 0);
  for (int it = 0; it < 100; ++it) {
    for (int v = 0; v < n; ++v) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (mesh.vertex2(v) - mesh.vertex2(medoids[c])).norm();
        if (d < best) {
          best = d;
          labels[v] = c;
        }
      }
    }
    bool changed = false;
    for (int c = 0; c < k; ++c) {
      std::vector<int> members;
      for (int v = 0; v < n; ++v) {
        if (labels[v] == c) members.push_back(v);
      }
      int best_v = medoids[c];
      double best_cost = std::numeric_limits<double>::infinity();
      for (int cand : members) {
        double cost = 0.0;
        for (int v : members) cost += (mesh.vertex2(v) - mesh.vertex2(cand)).norm();
        if (cost < best_cost - 1e-12) {
          best_cost = cost;
          best_v = cand;
        }
      }
      if (best_v != medoids[c]) {
        medoids[c] = best_v;
        changed = true;
      }
    }
    if (!changed) break;
  }

  Placement out;
  out.labels = labels;
  for (int c : medoids) out.handles.push_back({c, true});
  return out;
}

nlohmann::json handles_to_json(const std::vector<Handle>& handles) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& h : handles) j.push_back({{"vertex", h.vertex}, {"active", h.active}});
  return j;
}

std::vector<Handle> handles_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("handles: expected a JSON array");
  std::vector<Handle> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("vertex")) throw ParseError("handles: each entry needs a \"vertex\"");
    for (const auto& [key, value] : e.items()) {
      if (key != "vertex" && key != "active") throw ParseError("handles: unknown key \"" + key + "\"");
    }
    Handle h;
    h.vertex = e.at("vertex").get<int>();
    h.active = e.value("active", true);
    out.push_back(h);
  }
  return out;
}

}  // namespace coupler
