#pragma once

#include "ccodt/types.hpp"

#include <memory>
#include <span>
#include <vector>

namespace ccodt {

/// Spectrum on the centered frequency grid; its pitch is the frequency
/// spacing 2 pi / (N p) of the image it came from.
using SpectrumImage = Grid2<Complex>;

/// All transforms approximate the continuous transform
///   F_d[g](xi) = (2 pi)^{-d/2} \int g(x) exp(-i <x, xi>) dx
/// by the Riemann sum (2 pi)^{-d/2} p^d sum_x g(x) exp(-i <x, xi>).
enum class NdftMethod {
  Direct,  // O(M N^d) reference sum
  Fast,    // oversampled FFT + exponential-of-semicircle gridding
};

struct NdftOptions {
  NdftMethod method = NdftMethod::Fast;
  /// Target relative accuracy of the fast path; sets the kernel width.
  double tolerance = 1e-10;
};

SpectrumImage fft2_centered(const FieldImage& img);
FieldImage ifft2_centered(const SpectrumImage& spectrum);

/// Throws if any coordinate of a node lies outside (-pi/p, pi/p).
void check_band(std::span<const Vec2> nodes, double pitch);
void check_band(std::span<const Vec3> nodes, double pitch);

std::vector<Complex> ndft2(const FieldImage& img, std::span<const Vec2> nodes,
                           const NdftOptions& opts = {});
std::vector<Complex> ndft3(const ComplexVolume& vol, std::span<const Vec3> nodes,
                           const NdftOptions& opts = {});
/// Adjoint of ndft3 with respect to the Euclidean inner products on the
/// voxel values and the node values.
ComplexVolume ndft3_adjoint(std::span<const Complex> values, std::span<const Vec3> nodes,
                            int grid_n, double pitch, const NdftOptions& opts = {});
FieldImage ndft2_adjoint(std::span<const Complex> values, std::span<const Vec2> nodes, int grid_n,
                         double pitch, const NdftOptions& opts = {});

/// Evaluates ndft3 of a fixed volume at many node batches; the fast path
/// keeps the deconvolved, oversampled spectrum between calls.
class Ndft3Evaluator {
 public:
  Ndft3Evaluator(const ComplexVolume& vol, const NdftOptions& opts = {});
  ~Ndft3Evaluator();
  Ndft3Evaluator(Ndft3Evaluator&&) noexcept;
  Ndft3Evaluator& operator=(Ndft3Evaluator&&) noexcept;

  std::vector<Complex> operator()(std::span<const Vec3> nodes) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Same as Ndft3Evaluator for 2D images.
class Ndft2Evaluator {
 public:
  Ndft2Evaluator(const FieldImage& img, const NdftOptions& opts = {});
  ~Ndft2Evaluator();
  Ndft2Evaluator(Ndft2Evaluator&&) noexcept;
  Ndft2Evaluator& operator=(Ndft2Evaluator&&) noexcept;

  std::vector<Complex> operator()(std::span<const Vec2> nodes) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Values at (r_n cos phi_l, r_n sin phi_l), stored angle-major.
struct PolarSamples {
  int n_angles = 0;
  int n_radii = 0;
  std::vector<Complex> values;

  Complex& operator()(int l, int n) { return values[static_cast<std::size_t>(l) * n_radii + n]; }
  const Complex& operator()(int l, int n) const {
    return values[static_cast<std::size_t>(l) * n_radii + n];
  }
};

std::vector<Vec2> polar_nodes(std::span<const double> radii, std::span<const double> angles);
PolarSamples polar_samples(const FieldImage& img, std::span<const double> radii,
                           std::span<const double> angles, const NdftOptions& opts = {});

}  // namespace ccodt
