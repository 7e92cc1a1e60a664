#pragma once

#include "ccodt/so3.hpp"
#include "ccodt/types.hpp"

#include <cstdint>
#include <string>

namespace ccodt {

/// Binary ODTS file: a 64-byte little-endian header followed by complex64
/// samples, frame-major and row-major. Header layout:
///   0 magic "ODTS"     4 u32 version     8 u32 ndim (3)
///   12 u32 n1 (x1)     16 u32 n2 (x2)    20 u32 n3 (frames or x3)
///   24 f64 pitch       32 f64 wavelength 40 f64 n0    48 f64 r_m
///   56 u32 dtype (1 = complex64)         60 u32 kind (0 stack, 1 volume)
/// A JSON sidecar at path + ".json" mirrors the header.
struct OdtsHeader {
  std::uint32_t version = 1;
  std::uint32_t n = 0;
  std::uint32_t depth = 0;  // frame count, or n for volumes
  double pitch = 0.0;
  double wavelength = 0.64;
  double n0 = 1.33;
  double r_m = 0.0;
  std::uint32_t kind = 0;

  std::uint64_t payload_bytes() const { return std::uint64_t(depth) * n * n * 8; }
};

inline constexpr std::uint32_t kOdtsVersion = 1;
inline constexpr std::uint32_t kKindStack = 0;
inline constexpr std::uint32_t kKindVolume = 1;

void write_stack(const std::string& path, const FieldStack& stack);
FieldStack read_stack(const std::string& path);

/// Volumes carry the optical metadata of the stack they came from.
struct VolumeMeta {
  double wavelength = 0.64;
  double n0 = 1.33;
};
void write_volume(const std::string& path, const ComplexVolume& vol, const VolumeMeta& meta = {});
ComplexVolume read_volume(const std::string& path, VolumeMeta* meta = nullptr);

OdtsHeader read_header(const std::string& path);

/// CSV columns t,q0,q1,q2,q3[,d1,d2,d3]; quaternions with q0 >= 0.
void write_trajectory_csv(const std::string& path, const RotationTrajectory& traj);
/// An optional change of coordinates C maps each frame to C R C^T.
RotationTrajectory read_trajectory_csv(const std::string& path, const Mat3* change = nullptr);
void write_trajectory_json(const std::string& path, const RotationTrajectory& traj);
RotationTrajectory read_trajectory_json(const std::string& path, const Mat3* change = nullptr);
/// Dispatches on the extension (.json, otherwise CSV).
RotationTrajectory read_trajectory(const std::string& path, const Mat3* change = nullptr);
void write_trajectory(const std::string& path, const RotationTrajectory& traj);

/// Lowercase hex SHA-256 of the file contents.
std::string sha256_file(const std::string& path);

/// 8-bit grayscale PNG of the slice index along axis (0 = x1, 1 = x2,
/// 2 = x3), values mapped linearly from [lo, hi].
void write_png_slice(const std::string& path, const RealVolume& vol, int axis, int index, double lo, double hi);

}  // namespace ccodt
