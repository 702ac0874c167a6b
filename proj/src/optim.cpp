#include "gac/optim.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace gac {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double step,
                             const NelderMeadOptions& opts) {
  const int n = int(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

  std::vector<Eigen::VectorXd> pts(std::size_t(n) + 1, x0);
  for (int i = 0; i < n; ++i) pts[std::size_t(i) + 1][i] += step;
  std::vector<double> fv(std::size_t(n) + 1);
  for (std::size_t i = 0; i < pts.size(); ++i) fv[i] = f(pts[i]);

  std::vector<int> ord(std::size_t(n) + 1);
  NelderMeadResult res;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    std::iota(ord.begin(), ord.end(), 0);
    // Stable sort keeps vertex handling deterministic under ties.
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return fv[std::size_t(a)] < fv[std::size_t(b)]; });
    const int best = ord.front(), worst = ord.back(), second = ord[std::size_t(n) - 1];

    double diam = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      diam = std::max(diam, (pts[i] - pts[0]).lpNorm<Eigen::Infinity>());
    if (fv[std::size_t(worst)] - fv[std::size_t(best)] <= opts.f_tol && diam <= opts.x_tol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += pts[std::size_t(i)];
    centroid /= double(n);

    const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[std::size_t(worst)]);
    const double fr = f(xr);
    if (fr < fv[std::size_t(best)]) {
      const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        pts[std::size_t(worst)] = xe;
        fv[std::size_t(worst)] = fe;
      } else {
        pts[std::size_t(worst)] = xr;
        fv[std::size_t(worst)] = fr;
      }
      continue;
    }
    if (fr < fv[std::size_t(second)]) {
      pts[std::size_t(worst)] = xr;
      fv[std::size_t(worst)] = fr;
      continue;
    }
    const bool outside = fr < fv[std::size_t(worst)];
    const Eigen::VectorXd xc =
        outside ? (centroid + rho * (xr - centroid)).eval()
                : (centroid + rho * (pts[std::size_t(worst)] - centroid)).eval();
    const double fc = f(xc);
    if (fc < (outside ? fr : fv[std::size_t(worst)])) {
      pts[std::size_t(worst)] = xc;
      fv[std::size_t(worst)] = fc;
      continue;
    }
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      pts[std::size_t(i)] = pts[std::size_t(best)] + shrink * (pts[std::size_t(i)] - pts[std::size_t(best)]);
      fv[std::size_t(i)] = f(pts[std::size_t(i)]);
    }
  }

  std::size_t argmin = 0;
  for (std::size_t i = 1; i < fv.size(); ++i)
    if (fv[i] < fv[argmin]) argmin = i;
  res.x = pts[argmin];
  res.fval = fv[argmin];
  res.iterations = it;
  return res;
}

} // namespace gac
