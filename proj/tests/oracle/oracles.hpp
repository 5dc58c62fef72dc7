#pragma once

// Independent numeric oracles used by the unit and acceptance tests.  None
// of these call into the library's special-function or score code paths:
// densities come from adaptive quadrature, derivatives from Richardson-
// extrapolated central differences, and the erfc reference from long-double
// libm.  The frozen constants at the bottom were produced by
// tests/oracle/make_reference.py (mpmath, 40 significant digits).

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "diffce/schedule.hpp"

namespace oracle {

// ----- adaptive Simpson ------------------------------------------------------

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) return left + right + delta / 15.0;
  if (std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace detail

// Integrates f over [a, b] to absolute tolerance eps.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double eps) {
  if (!(b > a)) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

// ----- diffused Boltzmann density by quadrature ------------------------------
//
// b(x0) proportional to exp(-sqrt(2) |x0| / sigma_ce), diffused by
// x_t = alpha x0 + sigma_t z.  The density of the offset y = x_t is
//   p_t(y) = integral b(x0) N(y; alpha x0, sigma_t^2) dx0.
// The integrand is evaluated in log space and rescaled by its maximum so
// the quadrature never underflows.

inline double quad_boltzmann_log_density(const diffce::VpSchedule& sched,
                                         double sigma_ce, double y, double t) {
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  const double lam0 = std::sqrt(2.0) / sigma_ce;
  const auto log_integrand = [&](double x0) {
    const double d = y - a * x0;
    return std::log(lam0 / 2.0) - lam0 * std::abs(x0) -
           d * d / (2.0 * s * s) - std::log(s) -
           0.5 * std::log(2.0 * 3.14159265358979323846);
  };
  const double lim = std::abs(y) / a + 15.0 * (s / a + sigma_ce);
  // scan for the max so the scaled integrand is O(1)
  double peak = log_integrand(0.0);
  for (int i = 0; i <= 400; ++i) {
    const double x0 = -lim + 2.0 * lim * i / 400.0;
    peak = std::max(peak, log_integrand(x0));
  }
  std::vector<double> pts = {-lim, 0.0, y / a, lim};
  std::sort(pts.begin(), pts.end());
  const auto g = [&](double x0) { return std::exp(log_integrand(x0) - peak); };
  double total = 0.0;
  // near the double-precision floor; the score/curvature differences below
  // divide by small steps and amplify any slack left here
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    total += integrate(g, pts[i], pts[i + 1], 3e-16 * lim);
  if (!(total > 0.0))
    throw std::runtime_error("quadrature produced a non-positive density");
  return peak + std::log(total);
}

// Characteristic length of the diffused density; finite-difference steps are
// scaled by it.
inline double boltzmann_length_scale(const diffce::VpSchedule& sched,
                                     double sigma_ce, double t) {
  return std::min(sched.sigma(t), sched.alpha(t) * sigma_ce);
}

// d/dy log p_t(y) by Richardson-extrapolated central differences.  The step
// is kept large relative to the quadrature tolerance — extrapolation removes
// the O(h^2) truncation term that a large step would otherwise cost.
inline double quad_boltzmann_score(const diffce::VpSchedule& sched,
                                   double sigma_ce, double y, double t) {
  const double h = 5e-2 * boltzmann_length_scale(sched, sigma_ce, t);
  const auto ld = [&](double yy) {
    return quad_boltzmann_log_density(sched, sigma_ce, yy, t);
  };
  const double d1 = (ld(y + h) - ld(y - h)) / (2.0 * h);
  const double d2 = (ld(y + 2.0 * h) - ld(y - 2.0 * h)) / (4.0 * h);
  return (4.0 * d1 - d2) / 3.0;
}

// d^2/dy^2 log p_t at y = 0 by Richardson-extrapolated second differences.
inline double quad_boltzmann_curvature0(const diffce::VpSchedule& sched,
                                        double sigma_ce, double t) {
  const double h = 1e-1 * boltzmann_length_scale(sched, sigma_ce, t);
  const auto ld = [&](double yy) {
    return quad_boltzmann_log_density(sched, sigma_ce, yy, t);
  };
  const double c = ld(0.0);
  const double c1 = (ld(h) - 2.0 * c + ld(-h)) / (h * h);
  const double c2 = (ld(2.0 * h) - 2.0 * c + ld(-2.0 * h)) / (4.0 * h * h);
  return (4.0 * c1 - c2) / 3.0;
}

// ----- erfc ratio reference ---------------------------------------------------
//
// exp(-u^2) / erfc(u) evaluated entirely in long double libm; erfcl(19.9)
// is ~1e-174, far above the long-double underflow threshold.

inline double ratio_reference(double u) {
  const long double ul = static_cast<long double>(u);
  return static_cast<double>(std::exp(-ul * ul) / std::erfc(ul));
}

// ----- generic finite differences --------------------------------------------

inline double central_diff(const std::function<double(double)>& f, double x,
                           double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Gradient of a scalar field on R^d by central differences, one coordinate
// at a time.
inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, dn = x;
    up[i] += h;
    dn[i] -= h;
    g[i] = (f(up) - f(dn)) / (2.0 * h);
  }
  return g;
}

// ----- frozen references (mpmath, 40 dps; see make_reference.py) -------------

namespace ref {

inline constexpr double kAlpha1 = 0.006571586494929615014050286;
inline constexpr double kSigma1 = 0.9999784068923386801118348;
inline constexpr double kAlphaHalf = 0.2811828807967523758453766;
inline constexpr double kSigmaHalf = 0.9596542020680362466575569;

inline constexpr double kRatio0 = 1.0;
inline constexpr double kRatioHalf = 1.624193085748070669714709;
inline constexpr double kRatio1 = 2.338724066510006476613937;
inline constexpr double kRatio2 = 3.915493067252308972350121;
inline constexpr double kRatio5 = 9.03304523168399838634959;
inline constexpr double kRatio10 = 17.81229634757454358281896;
inline constexpr double kRatio19_9 = 35.3162538959590156818792;
inline constexpr double kRatioDirect20 = 35.49327827205297916924984;
inline constexpr double kRatioOffset = 0.04420125394265862328648837;

inline constexpr double kErfcx0 = 1.0;
inline constexpr double kErfcx0_001 = 0.9988726200811514086278983;
inline constexpr double kErfcxHalf = 0.6156903441929258748707934;
inline constexpr double kErfcx1 = 0.4275835761558070044107503;
inline constexpr double kErfcx5 = 0.1107046377330686263702121;
inline constexpr double kErfcx19_9 = 0.02831557398318576451350756;
inline constexpr double kErfcx25 = 0.02254957243264135894360458;
inline constexpr double kErfcx26 = 0.02168358485056290661617299;
inline constexpr double kErfcx100 = 0.005641613782989432903556457;

// t with alpha(t) = 1/sqrt(2); at sigma_ce = 0.2 this gives u = 5, lambda = 10.
inline constexpr double kTStar = 0.2589602624327965872979409;
inline constexpr double kGammaTStar = -0.1927000548636815066170582;
inline constexpr double kCurvatureTStar = -1.927000548636815066170582;

struct ScoreCase {
  double t, sigma_ce, y, score;
};
// Exact diffused-Boltzmann scores (mpmath quadrature + high-order diff).
inline constexpr ScoreCase kScoreCases[] = {
    {0.5, 0.2, 0.3, -0.3246461064159433045604146},
    {0.1, 0.5, -1.2, 2.976887100538692152543637},
    {0.9, 0.05, 0.01, -0.01000288240623496131634571},
    {0.2589602624327965872979409, 0.2, 0.15, -0.289042228861437217548899},
    {1.0, 0.3, 2.0, -2.000078601137128526105915},
    {0.02, 0.2, 0.05, -2.780047127216696228010673},
};

// Worst relative deviation of the hardtanh surrogate from the exact score
// over y in (0, 0.3], by diffusion time (sigma_ce = 0.2).  The surrogate is
// asymptotically exact as u grows and intentionally coarse in the small-u
// transition regime.
inline constexpr double kSurrogateDev_t002 = 0.232464;   // u ~ 0.39
inline constexpr double kSurrogateDev_t01 = 0.0123022;   // u ~ 1.70
inline constexpr double kSurrogateDev_tstar = 0.000108896;  // u = 5

}  // namespace ref

}  // namespace oracle
