#pragma once

// HOM interferogram models: direct quadrature over a Gaussian joint spectral
// amplitude, and the two-parameter dip envelope used by the event simulator.

#include <vector>

#include "homsync/timebase.hpp"

namespace homsync::photonics {

/// Gaussian joint spectral amplitude
///
///   A(ws, wi) = norm * exp(-(S - Sc)^2 / (4 sigma_plus^2) - (D - Dc)^2 / (4 sigma_minus^2))
///
/// with S = ws + wi, D = ws - wi, Sc = center_s + center_i, Dc = center_s - center_i.
/// |A|^2 then has standard deviation sigma_plus along S and sigma_minus along D.
/// All frequencies are angular, in rad/s.
struct JointSpectralAmplitude {
  double center_s = 0.0;
  double center_i = 0.0;
  double sigma_plus = 0.0;
  double sigma_minus = 0.0;
  double normalization = 1.0;

  double operator()(double ws, double wi) const;

  bool exchange_symmetric() const { return center_s == center_i; }

  /// Copy with `normalization` chosen so that the integral of |A|^2 over the plane is 1.
  JointSpectralAmplitude normalized() const;

  /// Validates sigma_plus > 0 and sigma_minus > 0; throws UsageError.
  void validate() const;
};

/// Degenerate pair source centred on `center` (rad/s). `detuning` splits the
/// signal and idler centres symmetrically, which is what lowers the visibility.
JointSpectralAmplitude make_jsa(double center, double sigma_plus, double sigma_minus, double detuning = 0.0);

/// A Gaussian JSA whose quadrature dip has visibility `visibility` and
/// coherence time `coherence_time` (1/e half-width of the dip).
JointSpectralAmplitude jsa_for_dip(double visibility, Duration coherence_time, double center, double sigma_plus);

/// Default source: 1578 nm degenerate pairs from a 789 nm pump with 22 nm 3-dB bandwidth.
double default_pair_center();
double default_sigma_plus();

/// Uniform midpoint grid laid out along the natural (S, D) axes of the JSA.
struct QuadratureSpec {
  double points_per_sigma = 16.0;
  double span_sigmas = 8.0;
};

/// P_c(delay) / P_c(infinity) from a direct midpoint-rule evaluation of the
/// interferogram integral. Throws GridUnderresolvedError unless the grid has
/// at least 8 points per sigma and spans at least 5 sigma.
double hom_coincidence_probability(const JointSpectralAmplitude& jsa, Duration delay, const QuadratureSpec& grid = {});

/// Evaluates many delays against one precomputed grid (delays in seconds).
class InterferogramQuadrature {
 public:
  explicit InterferogramQuadrature(const JointSpectralAmplitude& jsa, const QuadratureSpec& grid = {});

  double at_seconds(double delay_s) const;
  double operator()(Duration delay) const { return at_seconds(delay.to_seconds()); }

  std::size_t grid_points() const { return grid_points_; }

 private:
  // The cosine term depends on D only, so the S axis is summed out up front.
  std::vector<double> diff_;
  std::vector<double> direct_;
  std::vector<double> cross_;
  double direct_total_ = 0.0;
  std::size_t grid_points_ = 0;
};

struct HomDipModel {
  double visibility = 0.68;
  Duration coherence_time = Duration::ps(3);
  double baseline_rate = 3000.0;  // coincidences / s far from the dip

  void validate() const;
};

/// 1 - V exp(-(delay / T_c)^2).
double dip_envelope(const HomDipModel& model, Duration delay);
double dip_envelope_seconds(const HomDipModel& model, double delay_s);

struct DipFit {
  HomDipModel model;
  double residual_rms = 0.0;
};

/// Least-squares fit of the envelope to the quadrature curve over
/// [-5 T_c, 5 T_c]. Throws FitDivergedError when the residual RMS exceeds 0.05.
DipFit dip_from_jsa(const JointSpectralAmplitude& jsa, const QuadratureSpec& grid = {}, double baseline_rate = 3000.0);

}  // namespace homsync::photonics
