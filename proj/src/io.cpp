#include "ccodt/io.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <vector>

namespace ccodt {

static_assert(std::endian::native == std::endian::little, "ODTS I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'D', 'T', 'S'};
constexpr std::size_t kHeaderBytes = 64;
constexpr std::uint32_t kComplex64 = 1;

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

std::vector<char> encode_header(const OdtsHeader& h) {
  std::vector<char> buf(kHeaderBytes, 0);
  std::memcpy(buf.data(), kMagic, 4);
  put<std::uint32_t>(buf, 4, h.version);
  put<std::uint32_t>(buf, 8, 3);
  put<std::uint32_t>(buf, 12, h.n);
  put<std::uint32_t>(buf, 16, h.n);
  put<std::uint32_t>(buf, 20, h.depth);
  put<double>(buf, 24, h.pitch);
  put<double>(buf, 32, h.wavelength);
  put<double>(buf, 40, h.n0);
  put<double>(buf, 48, h.r_m);
  put<std::uint32_t>(buf, 56, kComplex64);
  put<std::uint32_t>(buf, 60, h.kind);
  return buf;
}

OdtsHeader decode_header(const std::vector<char>& buf, const std::string& path) {
  if (buf.size() < kHeaderBytes || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error("not an ODTS file: " + path);
  OdtsHeader h;
  h.version = get<std::uint32_t>(buf, 4);
  if (h.version != kOdtsVersion) throw Error("unsupported ODTS version " + std::to_string(h.version) + ": " + path);
  if (get<std::uint32_t>(buf, 8) != 3) throw Error("ODTS ndim must be 3: " + path);
  h.n = get<std::uint32_t>(buf, 12);
  if (get<std::uint32_t>(buf, 16) != h.n) throw Error("ODTS frames must be square: " + path);
  h.depth = get<std::uint32_t>(buf, 20);
  h.pitch = get<double>(buf, 24);
  h.wavelength = get<double>(buf, 32);
  h.n0 = get<double>(buf, 40);
  h.r_m = get<double>(buf, 48);
  if (get<std::uint32_t>(buf, 56) != kComplex64) throw Error("ODTS dtype must be complex64: " + path);
  h.kind = get<std::uint32_t>(buf, 60);
  if (h.kind != kKindStack && h.kind != kKindVolume) throw Error("unknown ODTS kind: " + path);
  return h;
}

void write_sidecar(const std::string& path, const OdtsHeader& h) {
  nlohmann::ordered_json j;
  j["magic"] = "ODTS";
  j["version"] = h.version;
  j["kind"] = h.kind == kKindStack ? "stack" : "volume";
  j["n"] = h.n;
  j[h.kind == kKindStack ? "frames" : "depth"] = h.depth;
  j["pitch"] = h.pitch;
  j["wavelength"] = h.wavelength;
  j["n0"] = h.n0;
  j["r_m"] = h.r_m;
  j["dtype"] = "complex64";
  j["layout"] = "frame-major row-major";
  j["endianness"] = "little";
  j["payload_bytes"] = h.payload_bytes();
  std::ofstream out(path + ".json");
  if (!out) throw Error("cannot write " + path + ".json");
  out << j.dump(2) << '\n';
}

void write_file(const std::string& path, const OdtsHeader& h, const std::vector<const Complex*>& slices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto header = encode_header(h);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::size_t plane = std::size_t(h.n) * h.n;
  std::vector<float> buf(2 * plane);
  for (const Complex* s : slices) {
    for (std::size_t i = 0; i < plane; ++i) {
      buf[2 * i] = static_cast<float>(s[i].real());
      buf[2 * i + 1] = static_cast<float>(s[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw Error("write failed: " + path);
  write_sidecar(path, h);
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// Header plus payload, checked for length.
std::pair<OdtsHeader, std::vector<Complex>> read_file(const std::string& path, std::uint32_t kind) {
  const auto bytes = read_all(path);
  const OdtsHeader h = decode_header(bytes, path);
  if (h.kind != kind) throw Error(std::string("expected an ODTS ") + (kind == kKindStack ? "stack" : "volume") + ": " + path);
  if (bytes.size() != kHeaderBytes + h.payload_bytes()) throw Error("ODTS payload length mismatch: " + path);
  std::vector<Complex> values(h.payload_bytes() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    float re, im;
    std::memcpy(&re, bytes.data() + kHeaderBytes + 8 * i, 4);
    std::memcpy(&im, bytes.data() + kHeaderBytes + 8 * i + 4, 4);
    values[i] = {re, im};
  }
  return {h, std::move(values)};
}

}  // namespace

void write_stack(const std::string& path, const FieldStack& stack) {
  if (stack.count() == 0) throw Error("cannot write an empty stack");
  OdtsHeader h;
  h.n = static_cast<std::uint32_t>(stack.size());
  h.depth = static_cast<std::uint32_t>(stack.count());
  h.pitch = stack.pitch();
  h.wavelength = stack.wavelength;
  h.n0 = stack.n0;
  h.r_m = stack.r_m;
  h.kind = kKindStack;
  std::vector<const Complex*> slices;
  for (const auto& f : stack.frames) slices.push_back(f.data().data());
  write_file(path, h, slices);
}

FieldStack read_stack(const std::string& path) {
  auto [h, values] = read_file(path, kKindStack);
  FieldStack st;
  st.wavelength = h.wavelength;
  st.n0 = h.n0;
  st.r_m = h.r_m;
  const std::size_t plane = std::size_t(h.n) * h.n;
  for (std::uint32_t t = 0; t < h.depth; ++t) {
    FieldImage f(static_cast<int>(h.n), h.pitch);
    std::copy_n(values.begin() + t * plane, plane, f.data().begin());
    st.frames.push_back(std::move(f));
  }
  return st;
}

void write_volume(const std::string& path, const ComplexVolume& vol, const VolumeMeta& meta) {
  OdtsHeader h;
  h.n = h.depth = static_cast<std::uint32_t>(vol.size());
  h.pitch = vol.pitch();
  h.wavelength = meta.wavelength;
  h.n0 = meta.n0;
  h.kind = kKindVolume;
  const std::size_t plane = std::size_t(h.n) * h.n;
  std::vector<const Complex*> slices;
  for (std::uint32_t z = 0; z < h.depth; ++z) slices.push_back(vol.data().data() + z * plane);
  write_file(path, h, slices);
}

ComplexVolume read_volume(const std::string& path, VolumeMeta* meta) {
  auto [h, values] = read_file(path, kKindVolume);
  if (h.depth != h.n) throw Error("ODTS volume must be cubic: " + path);
  ComplexVolume v(static_cast<int>(h.n), h.pitch);
  std::copy(values.begin(), values.end(), v.data().begin());
  if (meta) *meta = {h.wavelength, h.n0};
  return v;
}

OdtsHeader read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<char> buf(kHeaderBytes);
  in.read(buf.data(), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw Error("truncated ODTS header: " + path);
  return decode_header(buf, path);
}

namespace {

Rotation conjugated(const Rotation& r, const Mat3* change) {
  if (!change) return r;
  return polar_project(*change * r.matrix() * change->transpose());
}

}  // namespace

void write_trajectory_csv(const std::string& path, const RotationTrajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const bool d = traj.has_translations();
  out << "t,q0,q1,q2,q3" << (d ? ",d1,d2,d3" : "") << '\n';
  out << std::setprecision(17);
  for (int t = 0; t < traj.size(); ++t) {
    const Quaternion q = to_quaternion(traj.frames[t]);
    out << t << ',' << q.q0 << ',' << q.q1 << ',' << q.q2 << ',' << q.q3;
    if (d) out << ',' << traj.translations[t](0) << ',' << traj.translations[t](1) << ',' << traj.translations[t](2);
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

RotationTrajectory read_trajectory_csv(const std::string& path, const Mat3* change) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty trajectory file: " + path);
  const bool d = line.find("d1") != std::string::npos;
  RotationTrajectory traj;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("malformed trajectory row " + std::to_string(row) + " in " + path);
      }
    }
    if (v.size() != (d ? 8u : 5u) || static_cast<int>(v[0]) != row)
      throw Error("malformed trajectory row " + std::to_string(row) + " in " + path);
    traj.frames.push_back(conjugated(from_quaternion({v[1], v[2], v[3], v[4]}), change));
    if (d) traj.translations.emplace_back(v[5], v[6], v[7]);
    ++row;
  }
  return traj;
}

void write_trajectory_json(const std::string& path, const RotationTrajectory& traj) {
  nlohmann::ordered_json j;
  j["frames"] = nlohmann::json::array();
  for (int t = 0; t < traj.size(); ++t) {
    const Quaternion q = to_quaternion(traj.frames[t]);
    nlohmann::ordered_json f;
    f["q"] = {q.q0, q.q1, q.q2, q.q3};
    if (traj.has_translations()) f["d"] = {traj.translations[t](0), traj.translations[t](1), traj.translations[t](2)};
    j["frames"].push_back(f);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

RotationTrajectory read_trajectory_json(const std::string& path, const Mat3* change) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  RotationTrajectory traj;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& f : j.at("frames")) {
      const auto q = f.at("q").get<std::vector<double>>();
      if (q.size() != 4) throw Error("quaternion needs four entries");
      traj.frames.push_back(conjugated(from_quaternion({q[0], q[1], q[2], q[3]}), change));
      if (f.contains("d")) {
        const auto d = f["d"].get<std::vector<double>>();
        if (d.size() != 3) throw Error("translation needs three entries");
        traj.translations.emplace_back(d[0], d[1], d[2]);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed trajectory JSON " + path + ": " + e.what());
  }
  if (traj.has_translations() && traj.translations.size() != traj.frames.size())
    throw Error("translations missing for some frames: " + path);
  return traj;
}

RotationTrajectory read_trajectory(const std::string& path, const Mat3* change) {
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  return json ? read_trajectory_json(path, change) : read_trajectory_csv(path, change);
}

void write_trajectory(const std::string& path, const RotationTrajectory& traj) {
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  json ? write_trajectory_json(path, traj) : write_trajectory_csv(path, traj);
}

std::string sha256_file(const std::string& path) {
  const auto bytes = read_all(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("SHA-256 failed for " + path);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_png_slice(const std::string& path, const RealVolume& vol, int axis, int index, double lo, double hi) {
  const int n = vol.size();
  if (axis < 0 || axis > 2 || index < 0 || index >= n) throw Error("slice out of range");
  if (!(hi > lo)) throw Error("display range must satisfy lo < hi");
  std::vector<png_byte> pixels(std::size_t(n) * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double v;
      if (axis == 2) v = vol(index, r, c);
      else if (axis == 1) v = vol(r, index, c);
      else v = vol(r, c, index);
      pixels[std::size_t(r) * n + c] = static_cast<png_byte>(std::lround(255.0 * std::clamp((v - lo) / (hi - lo), 0.0, 1.0)));
    }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(n);
  image.height = static_cast<png_uint_32>(n);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
    throw Error("PNG write failed for " + path + ": " + image.message);
}

}  // namespace ccodt
