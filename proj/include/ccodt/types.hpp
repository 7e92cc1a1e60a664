#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccodt {

using Complex = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Error raised for contract violations and numerical failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Square 2D raster on the centered grid p * {-N/2, ..., N/2-1}^2.
///
/// Storage is row-major with the row index along x2 and the column index
/// along x1, so pixel (iy, ix) sits at ((ix - N/2) p, (iy - N/2) p).
template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int n, double pitch, T fill = T{})
      : n_(n), pitch_(pitch), data_(static_cast<std::size_t>(n) * n, fill) {
    if (n <= 0 || n % 2 != 0) throw Error("grid size must be positive and even");
    if (!(pitch > 0.0)) throw Error("pixel pitch must be positive");
  }

  int size() const { return n_; }
  double pitch() const { return pitch_; }
  std::size_t count() const { return data_.size(); }

  T& operator()(int iy, int ix) { return data_[static_cast<std::size_t>(iy) * n_ + ix]; }
  const T& operator()(int iy, int ix) const {
    return data_[static_cast<std::size_t>(iy) * n_ + ix];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Physical coordinate of an index along one axis.
  double coord(int i) const { return (i - n_ / 2) * pitch_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  int n_ = 0;
  double pitch_ = 1.0;
  std::vector<T> data_;
};

/// Cubic 3D raster, index order (iz, iy, ix) with iz along x3.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  Grid3(int n, double pitch, T fill = T{})
      : n_(n), pitch_(pitch), data_(static_cast<std::size_t>(n) * n * n, fill) {
    if (n <= 0 || n % 2 != 0) throw Error("grid size must be positive and even");
    if (!(pitch > 0.0)) throw Error("voxel pitch must be positive");
  }

  int size() const { return n_; }
  double pitch() const { return pitch_; }
  std::size_t count() const { return data_.size(); }

  T& operator()(int iz, int iy, int ix) {
    return data_[(static_cast<std::size_t>(iz) * n_ + iy) * n_ + ix];
  }
  const T& operator()(int iz, int iy, int ix) const {
    return data_[(static_cast<std::size_t>(iz) * n_ + iy) * n_ + ix];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  double coord(int i) const { return (i - n_ / 2) * pitch_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  int n_ = 0;
  double pitch_ = 1.0;
  std::vector<T> data_;
};

using FieldImage = Grid2<Complex>;
using RealImage = Grid2<double>;
using ComplexVolume = Grid3<Complex>;
using RealVolume = Grid3<double>;

/// Time-indexed stack of complex images sharing size and pitch, with the
/// optical metadata needed downstream.
struct FieldStack {
  std::vector<FieldImage> frames;
  double wavelength = 0.64;  // vacuum wavelength, same length unit as pitch
  double n0 = 1.33;
  double r_m = 0.0;          // measurement plane offset along x3

  int size() const { return frames.empty() ? 0 : frames.front().size(); }
  double pitch() const { return frames.empty() ? 1.0 : frames.front().pitch(); }
  int count() const { return static_cast<int>(frames.size()); }
  double k0() const { return 2.0 * kPi * n0 / wavelength; }
};

}  // namespace ccodt
