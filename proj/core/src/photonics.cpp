#include "homsync/photonics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "homsync/error.hpp"

namespace homsync::photonics {

namespace {

constexpr double kSpeedOfLight = 299'792'458.0;

}  // namespace

double JointSpectralAmplitude::operator()(double ws, double wi) const {
  const double s = (ws + wi) - (center_s + center_i);
  const double d = (ws - wi) - (center_s - center_i);
  return normalization * std::exp(-s * s / (4.0 * sigma_plus * sigma_plus) - d * d / (4.0 * sigma_minus * sigma_minus));
}

void JointSpectralAmplitude::validate() const {
  if (!(sigma_plus > 0.0) || !(sigma_minus > 0.0))
    throw UsageError("joint spectral amplitude: sigma_plus and sigma_minus must be positive");
}

JointSpectralAmplitude JointSpectralAmplitude::normalized() const {
  validate();
  // Integral of exp(-S^2/2sp^2 - D^2/2sm^2) dws dwi = (1/2) * 2 pi sp sm.
  JointSpectralAmplitude out = *this;
  out.normalization = 1.0 / std::sqrt(std::numbers::pi * sigma_plus * sigma_minus);
  return out;
}

JointSpectralAmplitude make_jsa(double center, double sigma_plus, double sigma_minus, double detuning) {
  JointSpectralAmplitude jsa;
  jsa.center_s = center + 0.5 * detuning;
  jsa.center_i = center - 0.5 * detuning;
  jsa.sigma_plus = sigma_plus;
  jsa.sigma_minus = sigma_minus;
  return jsa.normalized();
}

JointSpectralAmplitude jsa_for_dip(double visibility, Duration coherence_time, double center, double sigma_plus) {
  if (!(visibility > 0.0) || visibility > 1.0) throw UsageError("jsa_for_dip: visibility must be in (0, 1]");
  if (coherence_time.ticks() <= 0) throw UsageError("jsa_for_dip: coherence time must be positive");
  // Cross term ~ exp(-(D^2 + Dc^2) / 2 sm^2): dip = 1 - exp(-Dc^2/2sm^2) exp(-sm^2 tau^2 / 2).
  const double sigma_minus = std::numbers::sqrt2 / coherence_time.to_seconds();
  const double detuning = sigma_minus * std::sqrt(2.0 * std::log(1.0 / visibility));
  return make_jsa(center, sigma_plus, sigma_minus, detuning);
}

double default_pair_center() {
  // Degenerate down-conversion of a 789 nm pump.
  return 2.0 * std::numbers::pi * kSpeedOfLight / 1578e-9;
}

double default_sigma_plus() {
  // 22 nm FWHM at 789 nm, converted to an intensity standard deviation in
  // angular frequency: dw = 2 pi c dl / l^2, sigma = FWHM / (2 sqrt(2 ln 2)).
  const double lambda = 789e-9;
  const double fwhm = 2.0 * std::numbers::pi * kSpeedOfLight * 22e-9 / (lambda * lambda);
  return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

InterferogramQuadrature::InterferogramQuadrature(const JointSpectralAmplitude& jsa, const QuadratureSpec& grid) {
  jsa.validate();
  if (grid.points_per_sigma < 8.0 || grid.span_sigmas < 5.0) {
    std::ostringstream msg;
    msg << "quadrature grid under-resolved: " << grid.points_per_sigma << " points per sigma over "
        << grid.span_sigmas << " sigma (need >= 8 and >= 5)";
    throw GridUnderresolvedError(msg.str());
  }
  const double sc = jsa.center_s + jsa.center_i;
  const double dc = std::abs(jsa.center_s - jsa.center_i);

  const double s_half = grid.span_sigmas * jsa.sigma_plus;
  const auto n_s = static_cast<std::size_t>(std::ceil(2.0 * grid.span_sigmas * grid.points_per_sigma));
  const double h_s = 2.0 * s_half / static_cast<double>(n_s);

  const double d_half = dc + grid.span_sigmas * jsa.sigma_minus;
  const auto n_d = static_cast<std::size_t>(std::ceil(2.0 * d_half * grid.points_per_sigma / jsa.sigma_minus));
  const double h_d = 2.0 * d_half / static_cast<double>(n_d);

  diff_.resize(n_d);
  direct_.assign(n_d, 0.0);
  cross_.assign(n_d, 0.0);
  // Jacobian of (ws, wi) -> (S, D) is 1/2.
  const double cell = 0.5 * h_s * h_d;
  for (std::size_t l = 0; l < n_d; ++l) {
    const double d = -d_half + (static_cast<double>(l) + 0.5) * h_d;
    diff_[l] = d;
    double direct = 0.0;
    double cross = 0.0;
    for (std::size_t k = 0; k < n_s; ++k) {
      const double s = sc - s_half + (static_cast<double>(k) + 0.5) * h_s;
      const double ws = 0.5 * (s + d);
      const double wi = 0.5 * (s - d);
      const double a = jsa(ws, wi);
      const double b = jsa(wi, ws);
      direct += a * a;
      cross += std::abs(a * b);
    }
    direct_[l] = direct * cell;
    cross_[l] = cross * cell;
    direct_total_ += direct_[l];
  }
  grid_points_ = n_s * n_d;
}

double InterferogramQuadrature::at_seconds(double delay_s) const {
  double sum = 0.0;
  for (std::size_t l = 0; l < diff_.size(); ++l) sum += direct_[l] - cross_[l] * std::cos(diff_[l] * delay_s);
  return sum / direct_total_;
}

double hom_coincidence_probability(const JointSpectralAmplitude& jsa, Duration delay, const QuadratureSpec& grid) {
  return InterferogramQuadrature(jsa, grid)(delay);
}

void HomDipModel::validate() const {
  if (!(visibility >= 0.0 && visibility <= 1.0)) throw UsageError("dip model: visibility must be in [0, 1]");
  if (coherence_time.ticks() <= 0) throw UsageError("dip model: coherence time must be positive");
  if (!(baseline_rate > 0.0)) throw UsageError("dip model: baseline rate must be positive");
}

double dip_envelope_seconds(const HomDipModel& model, double delay_s) {
  const double x = delay_s / model.coherence_time.to_seconds();
  return 1.0 - model.visibility * std::exp(-x * x);
}

double dip_envelope(const HomDipModel& model, Duration delay) {
  const double x = static_cast<double>(delay.ticks()) / static_cast<double>(model.coherence_time.ticks());
  return 1.0 - model.visibility * std::exp(-x * x);
}

namespace {

struct EnvelopeFit {
  double visibility;
  double coherence_s;
  double rms;
};

EnvelopeFit fit_envelope(const std::vector<double>& tau, const std::vector<double>& y, double v0, double t0) {
  double v = v0;
  double t = t0;
  double lambda = 1e-3;
  auto cost = [&](double vv, double tt) {
    double c = 0.0;
    for (std::size_t i = 0; i < tau.size(); ++i) {
      const double x = tau[i] / tt;
      const double r = 1.0 - vv * std::exp(-x * x) - y[i];
      c += r * r;
    }
    return c;
  };
  double current = cost(v, t);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < tau.size(); ++i) {
      const double x = tau[i] / t;
      const double e = std::exp(-x * x);
      const double r = 1.0 - v * e - y[i];
      const Eigen::Vector2d j(-e, -v * e * 2.0 * x * x / t);
      jtj += j * j.transpose();
      jtr += j * r;
    }
    Eigen::Matrix2d damped = jtj;
    damped.diagonal() *= (1.0 + lambda);
    const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
    const double nv = v + step(0);
    const double nt = t + step(1);
    if (nt <= 0.0) {
      lambda *= 10.0;
      continue;
    }
    const double trial = cost(nv, nt);
    if (trial <= current) {
      const bool converged = std::abs(step(0)) <= 1e-12 + 1e-10 * std::abs(v) && std::abs(step(1)) <= 1e-10 * t;
      v = nv;
      t = nt;
      current = trial;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (converged) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return {v, t, std::sqrt(current / static_cast<double>(tau.size()))};
}

}  // namespace

DipFit dip_from_jsa(const JointSpectralAmplitude& jsa, const QuadratureSpec& grid, double baseline_rate) {
  const InterferogramQuadrature curve(jsa, grid);
  const double depth0 = 1.0 - curve.at_seconds(0.0);

  // 1/e half-width of the quadrature dip by bracketing and bisection.
  double t0 = std::numbers::sqrt2 / jsa.sigma_minus;
  if (depth0 > 1e-9) {
    const double target = depth0 / std::numbers::e;
    double lo = 0.0;
    double hi = 1.0 / jsa.sigma_minus;
    for (int i = 0; i < 200 && 1.0 - curve.at_seconds(hi) > target; ++i) {
      lo = hi;
      hi *= 2.0;
    }
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (1.0 - curve.at_seconds(mid) > target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    t0 = 0.5 * (lo + hi);
  }

  EnvelopeFit fit{depth0, t0, 0.0};
  constexpr int kSamples = 201;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> tau(kSamples);
    std::vector<double> y(kSamples);
    const double half = 5.0 * fit.coherence_s;
    for (int i = 0; i < kSamples; ++i) {
      tau[i] = -half + 2.0 * half * i / (kSamples - 1);
      y[i] = curve.at_seconds(tau[i]);
    }
    fit = fit_envelope(tau, y, fit.visibility, fit.coherence_s);
  }
  if (!(fit.rms <= 0.05)) {
    std::ostringstream msg;
    msg << "dip fit diverged: residual rms " << fit.rms;
    throw FitDivergedError(msg.str());
  }
  DipFit out;
  out.model.visibility = std::clamp(fit.visibility, 0.0, 1.0);
  out.model.coherence_time = Duration::from_seconds(fit.coherence_s);
  out.model.baseline_rate = baseline_rate;
  out.residual_rms = fit.rms;
  return out;
}

}  // namespace homsync::photonics
