#include "vibestep/matching.hpp"

#include <limits>

namespace vibestep {

// Hungarian algorithm (shortest augmenting path with potentials) on the
// square cost matrix obtained by padding with zero-weight dummies.
std::vector<int> max_weight_matching(const MatrixXd& weights) {
  const auto rows = static_cast<int>(weights.rows());
  const auto cols = static_cast<int>(weights.cols());
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  const double top = weights.size() ? weights.maxCoeff() : 0.0;
  auto cost = [&](int r, int c) {
    if (r < rows && c < cols) return top - weights(r, c);
    return top;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> result(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int r = p[j] - 1;
    const int c = j - 1;
    if (r < rows && c < cols) result[static_cast<std::size_t>(r)] = c;
  }
  return result;
}

}  // namespace vibestep
