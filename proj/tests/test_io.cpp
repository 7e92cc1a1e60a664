#include "ccodt/io.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ccodt;
using namespace ccodt::testing;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ccodt_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::vector<char> bytes_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// Drawn in single precision, so a complex64 round trip is lossless.
Complex random_single(std::mt19937_64& rng) {
  std::normal_distribution<float> g;
  const float re = g(rng);
  return {re, g(rng)};
}

FieldStack random_stack(int n, int frames, std::mt19937_64& rng) {
  FieldStack st;
  st.wavelength = 0.532;
  st.n0 = 1.336;
  st.r_m = 2.5;
  for (int t = 0; t < frames; ++t) {
    FieldImage f(n, 0.125);
    for (auto& v : f.data()) v = random_single(rng);
    st.frames.push_back(f);
  }
  return st;
}

template <typename T>
T at(const std::vector<char>& b, std::size_t offset) {
  T v;
  std::memcpy(&v, b.data() + offset, sizeof(T));
  return v;
}

}  // namespace

TEST_CASE("stack files round trip bit-identically") {
  std::mt19937_64 rng(11);
  const FieldStack st = random_stack(8, 5, rng);
  const std::string path = temp_path("stack.odts");
  write_stack(path, st);
  const FieldStack back = read_stack(path);

  REQUIRE(back.count() == 5);
  CHECK(back.size() == 8);
  CHECK(back.pitch() == st.pitch());
  CHECK(back.wavelength == st.wavelength);
  CHECK(back.n0 == st.n0);
  CHECK(back.r_m == st.r_m);
  for (int t = 0; t < 5; ++t) CHECK(back.frames[t].data() == st.frames[t].data());

  const std::string again = temp_path("stack2.odts");
  write_stack(again, back);
  CHECK(bytes_of(path) == bytes_of(again));

  SUBCASE("header layout and payload length") {
    const auto b = bytes_of(path);
    REQUIRE(b.size() == 64u + 5u * 8u * 8u * 8u);
    CHECK(std::string(b.data(), 4) == "ODTS");
    CHECK(at<std::uint32_t>(b, 4) == 1u);
    CHECK(at<std::uint32_t>(b, 8) == 3u);
    CHECK(at<std::uint32_t>(b, 12) == 8u);
    CHECK(at<std::uint32_t>(b, 16) == 8u);
    CHECK(at<std::uint32_t>(b, 20) == 5u);
    CHECK(at<double>(b, 24) == 0.125);
    CHECK(at<double>(b, 32) == 0.532);
    CHECK(at<double>(b, 40) == 1.336);
    CHECK(at<double>(b, 48) == 2.5);
    CHECK(at<std::uint32_t>(b, 56) == 1u);
    CHECK(at<std::uint32_t>(b, 60) == 0u);
    // Frame 1, row 2, column 3: frame-major, row-major, real then imaginary.
    const std::size_t off = 64 + 8 * ((1 * 8 + 2) * 8 + 3);
    CHECK(at<float>(b, off) == static_cast<float>(st.frames[1](2, 3).real()));
    CHECK(at<float>(b, off + 4) == static_cast<float>(st.frames[1](2, 3).imag()));
  }

  SUBCASE("sidecar mirrors the header") {
    std::ifstream in(path + ".json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["magic"] == "ODTS");
    CHECK(j["kind"] == "stack");
    CHECK(j["n"] == 8);
    CHECK(j["frames"] == 5);
    CHECK(j["pitch"].get<double>() == 0.125);
    CHECK(j["dtype"] == "complex64");
    CHECK(j["layout"] == "frame-major row-major");
    CHECK(j["payload_bytes"] == 5 * 8 * 8 * 8);
  }
}

TEST_CASE("volume files round trip bit-identically") {
  std::mt19937_64 rng(12);
  ComplexVolume v(6, 0.2);
  for (auto& x : v.data()) x = random_single(rng);
  const std::string path = temp_path("vol.odts");
  write_volume(path, v, {0.64, 1.33});
  VolumeMeta meta;
  const ComplexVolume back = read_volume(path, &meta);
  CHECK(back.size() == 6);
  CHECK(back.pitch() == 0.2);
  CHECK(back.data() == v.data());
  CHECK(meta.n0 == 1.33);
  CHECK(read_header(path).kind == kKindVolume);
  CHECK_THROWS_WITH_AS(read_stack(path), doctest::Contains("expected an ODTS stack"), Error);
}

TEST_CASE("malformed ODTS files are rejected") {
  std::mt19937_64 rng(13);
  const std::string path = temp_path("bad.odts");
  write_stack(path, random_stack(4, 2, rng));
  auto b = bytes_of(path);

  SUBCASE("truncated payload") {
    std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size() - 8));
    CHECK_THROWS_WITH_AS(read_stack(path), doctest::Contains("payload length"), Error);
  }
  SUBCASE("wrong magic") {
    b[0] = 'X';
    std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    CHECK_THROWS_WITH_AS(read_stack(path), doctest::Contains("not an ODTS file"), Error);
  }
  SUBCASE("future version") {
    b[4] = 2;
    std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    CHECK_THROWS_WITH_AS(read_stack(path), doctest::Contains("unsupported ODTS version"), Error);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_stack(temp_path("absent.odts")), Error); }
  SUBCASE("empty stack") { CHECK_THROWS_AS(write_stack(path, FieldStack{}), Error); }
}

TEST_CASE("trajectory files") {
  std::mt19937_64 rng(14);
  RotationTrajectory traj;
  for (int t = 0; t < 7; ++t) {
    traj.frames.push_back(random_rotation(rng));
    traj.translations.push_back(random_vec3(rng, 2.0));
  }

  for (const std::string name : {"traj.csv", "traj.json"}) {
    CAPTURE(name);
    const std::string path = temp_path(name);
    write_trajectory(path, traj);
    const RotationTrajectory back = read_trajectory(path);
    REQUIRE(back.size() == 7);
    REQUIRE(back.has_translations());
    for (int t = 0; t < 7; ++t) {
      CHECK((back.frames[t].matrix() - traj.frames[t].matrix()).norm() < 1e-14);
      CHECK((back.translations[t] - traj.translations[t]).norm() == 0.0);
    }
  }

  SUBCASE("rotation-only CSV has five columns") {
    RotationTrajectory bare;
    bare.frames = traj.frames;
    const std::string path = temp_path("bare.csv");
    write_trajectory_csv(path, bare);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,q0,q1,q2,q3");
    CHECK_FALSE(read_trajectory_csv(path).has_translations());
  }

  SUBCASE("coordinate change at import") {
    const Mat3 c = random_rotation(rng).matrix();
    const std::string path = temp_path("traj.csv");
    const RotationTrajectory back = read_trajectory(path, &c);
    for (int t = 0; t < 7; ++t)
      CHECK((back.frames[t].matrix() - c * traj.frames[t].matrix() * c.transpose()).norm() < 1e-12);
  }

  SUBCASE("malformed rows") {
    const std::string path = temp_path("broken.csv");
    std::ofstream(path) << "t,q0,q1,q2,q3\n0,1,0,0,0\n2,1,0,0,0\n";
    CHECK_THROWS_WITH_AS(read_trajectory_csv(path), doctest::Contains("row 1"), Error);
    std::ofstream(path) << "t,q0,q1,q2,q3\n0,1,0,zero,0\n";
    CHECK_THROWS_AS(read_trajectory_csv(path), Error);
    const std::string jpath = temp_path("broken.json");
    std::ofstream(jpath) << R"({"frames": [{"q": [1, 0, 0]}]})";
    CHECK_THROWS_AS(read_trajectory_json(jpath), Error);
  }
}

TEST_CASE("sha256 matches the standard test vectors") {
  const std::string path = temp_path("abc.txt");
  std::ofstream(path, std::ios::binary) << "abc";
  CHECK(sha256_file(path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::ofstream(path, std::ios::binary).flush();
  CHECK(sha256_file(path) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("PNG slice export") {
  RealVolume v(8, 1.0);
  for (std::size_t i = 0; i < v.count(); ++i) v[i] = static_cast<double>(i % 8);
  const std::string path = temp_path("slice.png");
  write_png_slice(path, v, 2, 4, 0.0, 7.0);
  const auto b = bytes_of(path);
  REQUIRE(b.size() > 8);
  CHECK(std::memcmp(b.data(), "\x89PNG\r\n\x1a\n", 8) == 0);
  CHECK_THROWS_AS(write_png_slice(path, v, 3, 0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(write_png_slice(path, v, 0, 8, 0.0, 1.0), Error);
  CHECK_THROWS_AS(write_png_slice(path, v, 0, 0, 1.0, 1.0), Error);
}
