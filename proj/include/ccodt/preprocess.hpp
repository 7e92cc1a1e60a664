#pragma once

#include "ccodt/types.hpp"

#include <vector>

namespace ccodt {

/// Per-frame incident field u_inc = exp(i phase), with the amplitude median
/// kept for the Rytov log term.
struct IncidentEstimate {
  std::vector<double> phase;
  std::vector<double> amplitude;
};

/// Pixelwise medians of arg u and |u| per frame (lower median for even
/// pixel counts).
IncidentEstimate estimate_incident(const FieldStack& stack);

/// u - exp(i phase_t).
FieldStack born_subtract(const FieldStack& stack, const IncidentEstimate& inc);

/// u_inc (i wrap(arg u - phase_t) + log(|u| / amplitude_t)), with the phase
/// difference wrapped into (-pi, pi].
FieldStack rytov_transform(const FieldStack& stack, const IncidentEstimate& inc);

/// C1 radial taper: 1 up to r1, 0 from r2, cubic in between.
double cutoff_weight(double r, double r1, double r2);
FieldStack soft_cutoff(const FieldStack& stack, double r1, double r2);

/// Separable Gaussian over (x1, x2, t); sigma in pixels (and frames).
FieldStack gaussian_smooth_3d(const FieldStack& stack, double sigma = 0.65);

struct ShiftOptions {
  /// Threshold as a fraction of the frame maximum of the filtered modulus.
  double threshold = 0.75;
};

struct ShiftEstimate {
  std::vector<Vec2> shifts;  // (x1, x2) in pixels
  std::vector<bool> empty;   // frame had nothing above the threshold
};

/// Footprint center of |u_t| per frame: 3x3 median filter, threshold, Kasa
/// circle fit on the region boundary. Apply to scattered fields.
ShiftEstimate estimate_shifts(const FieldStack& stack, const ShiftOptions& opts = {});

/// Bilinear resampling out(x) = in(x + shift_t), zero outside the frame.
FieldStack recenter(const FieldStack& stack, const std::vector<Vec2>& shifts);

enum class Linearization { Rytov, Born };

struct PreprocessOptions {
  Linearization linearization = Linearization::Rytov;
  /// Nonpositive radii select the defaults r2 = 0.95 (N/2) p, r1 = 0.7 r2.
  double r1 = 0.0;
  double r2 = 0.0;
  double smooth_sigma = 0.65;  // 0 disables
  bool recenter = false;
  ShiftOptions shift;
};

struct PreprocessResult {
  FieldStack m;
  IncidentEstimate incident;
  ShiftEstimate shifts;  // empty unless recentering was requested
};

/// Total fields to transformed measurements m_t: incident estimate,
/// linearization, optional recentering, soft cutoff, smoothing.
PreprocessResult preprocess(const FieldStack& total, const PreprocessOptions& opts = {});

}  // namespace ccodt
