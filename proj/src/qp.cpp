#include "coupler/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace coupler {

NonnegativeQpResult solve_nonnegative_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, int max_iterations) {
  const Eigen::Index m = c.size();
  NonnegativeQpResult result;
  result.solution = Eigen::VectorXd::Zero(m);
  if (m == 0) {
    result.converged = true;
    return result;
  }
  if (max_iterations < 0) max_iterations = static_cast<int>(3 * m + 20);

  const double diag_scale = std::max(Q.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const double ridge = 1e-12 * diag_scale;
  const double tol = 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff());

  Eigen::VectorXd& lambda = result.solution;
  std::vector<char> passive(m, 0);
  std::vector<char> blocked(m, 0);

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (passive[i]) idx.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      rhs[a] = -c[idx[a]];
      for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = Q(idx[a], idx[b]);
      sub(a, a) += ridge;
    }
    const Eigen::VectorXd sol = sub.ldlt().solve(rhs);
    z.setZero(m);
    for (Eigen::Index a = 0; a < k; ++a) z[idx[a]] = sol[a];
  };

  Eigen::VectorXd z(m);
  for (int it = 0; it < max_iterations; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd descent = -(Q * lambda + c);
    Eigen::Index best = -1;
    double best_value = tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!passive[i] && !blocked[i] && descent[i] > best_value) {
        best_value = descent[i];
        best = i;
      }
    }
    if (best < 0) {
      result.converged = true;
      return result;
    }
    passive[best] = 1;
    bool added = false;

    for (int inner = 0; inner < max_iterations; ++inner) {
      solve_passive(z);
      bool inside = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (passive[i] && z[i] <= 0.0) inside = false;
      }
      if (inside) {
        lambda = z;
        added = true;
        break;
      }
      // A just-added index that cannot go positive is numerically dependent.
      if (lambda[best] == 0.0 && z[best] <= 0.0) {
        passive[best] = 0;
        blocked[best] = 1;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (passive[i] && z[i] <= 0.0) {
          const double denom = lambda[i] - z[i];
          if (denom > 0.0) alpha = std::min(alpha, lambda[i] / denom);
        }
      }
      lambda += alpha * (z - lambda);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (passive[i] && lambda[i] <= 1e-15 * diag_scale) {
          passive[i] = 0;
          lambda[i] = 0.0;
        }
      }
    }
    // Blocked indices may re-enter once the passive set has grown.
    if (added) std::fill(blocked.begin(), blocked.end(), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!passive[i]) lambda[i] = 0.0;
    }
  }
  return result;
}

namespace {

enum class BoundState : char { kFree, kLower, kUpper, kPinned };

// Solves Q_FF w_F = -c_F - Q_FB w_B for the free set F.
bool solve_free(const Eigen::SparseMatrix<double>& Q, const Eigen::VectorXd& c, const std::vector<BoundState>& state,
                Eigen::VectorXd& w) {
  const Eigen::Index n = c.size();
  std::vector<Eigen::Index> local(n, -1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (state[i] == BoundState::kFree) local[i] = k++;
  }
  if (k == 0) return true;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (local[i] >= 0) rhs[local[i]] = -c[i];
  }
  for (Eigen::Index col = 0; col < Q.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(Q, col); it; ++it) {
      const Eigen::Index r = it.row();
      if (local[r] < 0) continue;
      if (local[col] >= 0) {
        triplets.emplace_back(local[r], local[col], it.value());
      } else {
        rhs[local[r]] -= it.value() * w[col];
      }
    }
  }
  Eigen::SparseMatrix<double> sub(k, k);
  sub.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sub);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (local[i] >= 0) w[i] = sol[local[i]];
  }
  return true;
}

bool kkt_satisfied(const Eigen::VectorXd& w, const Eigen::VectorXd& g, const std::vector<BoundState>& state, double lower,
                   double upper, double tol) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    switch (state[i]) {
      case BoundState::kFree:
        if (w[i] < lower - tol || w[i] > upper + tol) return false;
        break;
      case BoundState::kLower:
        if (g[i] < -tol) return false;
        break;
      case BoundState::kUpper:
        if (g[i] > tol) return false;
        break;
      case BoundState::kPinned:
        break;
    }
  }
  return true;
}

}  // namespace

BoxQpResult solve_box_qp(const Eigen::SparseMatrix<double>& Q, const Eigen::VectorXd& c, double lower, double upper,
                         const std::vector<std::pair<int, double>>& pinned, int max_iterations) {
  const Eigen::Index n = c.size();
  BoxQpResult result;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  std::vector<BoundState> state(n, BoundState::kFree);
  for (const auto& [i, value] : pinned) {
    state[i] = BoundState::kPinned;
    w[i] = value;
  }
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  const double tol = 1e-10 * scale;
  Eigen::VectorXd diag = Q.diagonal().cwiseMax(1e-300);

  // Primal-dual active set.
  solve_free(Q, c, state, w);
  for (int it = 0; it < max_iterations; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd g = Q * w + c;
    std::vector<BoundState> next = state;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == BoundState::kPinned) continue;
      const double trial = w[i] - g[i] / diag[i];
      if (trial < lower) {
        next[i] = BoundState::kLower;
      } else if (trial > upper) {
        next[i] = BoundState::kUpper;
      } else {
        next[i] = BoundState::kFree;
      }
    }
    if (next == state && kkt_satisfied(w, g, state, lower, upper, tol)) {
      result.converged = true;
      break;
    }
    state = std::move(next);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == BoundState::kLower) w[i] = lower;
      if (state[i] == BoundState::kUpper) w[i] = upper;
    }
    if (!solve_free(Q, c, state, w)) break;
  }

  if (!result.converged) {
    // Primal active set from the clamped point: one bound change per pass.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == BoundState::kPinned) continue;
      w[i] = std::clamp(w[i], lower, upper);
      if (state[i] == BoundState::kFree && (w[i] == lower || w[i] == upper)) {
        state[i] = w[i] == lower ? BoundState::kLower : BoundState::kUpper;
      }
    }
    const int budget = static_cast<int>(4 * n + 50);
    for (int it = 0; it < budget; ++it) {
      ++result.iterations;
      Eigen::VectorXd target = w;
      if (!solve_free(Q, c, state, target)) break;
      double alpha = 1.0;
      Eigen::Index hit = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (state[i] != BoundState::kFree) continue;
        const double step = target[i] - w[i];
        if (target[i] < lower && step < 0.0) {
          const double a = (lower - w[i]) / step;
          if (a < alpha) {
            alpha = a;
            hit = i;
          }
        } else if (target[i] > upper && step > 0.0) {
          const double a = (upper - w[i]) / step;
          if (a < alpha) {
            alpha = a;
            hit = i;
          }
        }
      }
      w += alpha * (target - w);
      if (hit >= 0) {
        state[hit] = target[hit] < lower ? BoundState::kLower : BoundState::kUpper;
        w[hit] = state[hit] == BoundState::kLower ? lower : upper;
        continue;
      }
      const Eigen::VectorXd g = Q * w + c;
      Eigen::Index release = -1;
      double worst = tol;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (state[i] == BoundState::kLower && -g[i] > worst) {
          worst = -g[i];
          release = i;
        } else if (state[i] == BoundState::kUpper && g[i] > worst) {
          worst = g[i];
          release = i;
        }
      }
      if (release < 0) {
        result.converged = true;
        break;
      }
      state[release] = BoundState::kFree;
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (state[i] != BoundState::kPinned) w[i] = std::clamp(w[i], lower, upper);
  }
  result.solution = std::move(w);
  return result;
}

}  // namespace coupler
