#include "ccodt/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace ccodt {

namespace {

void fft_inplace(std::vector<Complex>& data, std::span<const int> dims, int sign) {
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), ptr, ptr, sign,
                                 FFTW_ESTIMATE);
  if (plan == nullptr) throw Error("fftw planning failed");
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

inline int wrap_index(int i, int m) {
  const int r = i % m;
  return r < 0 ? r + m : r;
}

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Exponential-of-semicircle kernel in fine-grid units, support [-w/2, w/2].
class EsKernel {
 public:
  explicit EsKernel(double tolerance) {
    const double tol = std::clamp(tolerance, 1e-15, 1e-1);
    width_ = std::clamp(static_cast<int>(std::ceil(std::log10(1.0 / tol))) + 1, 2, 16);
    beta_ = 2.30 * width_;
    half_ = 0.5 * width_;
  }

  int width() const { return width_; }

  double operator()(double x) const {
    const double z = x / half_;
    if (std::abs(z) >= 1.0) return 0.0;
    return std::exp(beta_ * (std::sqrt(1.0 - z * z) - 1.0));
  }

  /// First fine-grid index touched by a point at u, and the w weights.
  int weights(double u, double* out) const {
    const int l0 = static_cast<int>(std::ceil(u - half_));
    for (int k = 0; k < width_; ++k) out[k] = (*this)(u - (l0 + k));
    return l0;
  }

  /// 1 / psi_hat(j / m) for j in {-n/2, ..., n/2-1}.
  std::vector<double> deconvolution(int n, int m) const {
    std::vector<double> x, w;
    gauss_legendre(4 * width_ + 64, x, w);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
      const double f = static_cast<double>(i - n / 2) / m;
      double acc = 0.0;
      for (std::size_t q = 0; q < x.size(); ++q) {
        const double xx = half_ * x[q];
        acc += w[q] * (*this)(xx) * std::cos(2.0 * kPi * f * xx);
      }
      out[i] = 1.0 / (acc * half_);
    }
    return out;
  }

 private:
  int width_ = 0;
  double beta_ = 0.0;
  double half_ = 0.0;
};

int fine_size(int n, const EsKernel& ker) {
  int m = std::max(2 * n, 2 * ker.width());
  return m + (m % 2);
}

double scale2(double p) { return p * p / (2.0 * kPi); }
double scale3(double p) { return p * p * p / std::pow(2.0 * kPi, 1.5); }

}  // namespace

// --- uniform transforms -----------------------------------------------------

SpectrumImage fft2_centered(const FieldImage& img) {
  const int n = img.size();
  const double p = img.pitch();
  std::vector<Complex> buf(img.count());
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      buf[static_cast<std::size_t>(wrap_index(iy - n / 2, n)) * n + wrap_index(ix - n / 2, n)] =
          img(iy, ix);
  const int dims[2] = {n, n};
  fft_inplace(buf, dims, FFTW_FORWARD);
  SpectrumImage out(n, 2.0 * kPi / (n * p));
  const double s = scale2(p);
  for (int ky = 0; ky < n; ++ky)
    for (int kx = 0; kx < n; ++kx)
      out(ky, kx) =
          s * buf[static_cast<std::size_t>(wrap_index(ky - n / 2, n)) * n + wrap_index(kx - n / 2, n)];
  return out;
}

FieldImage ifft2_centered(const SpectrumImage& spectrum) {
  const int n = spectrum.size();
  const double p = 2.0 * kPi / (n * spectrum.pitch());
  std::vector<Complex> buf(spectrum.count());
  for (int ky = 0; ky < n; ++ky)
    for (int kx = 0; kx < n; ++kx)
      buf[static_cast<std::size_t>(wrap_index(ky - n / 2, n)) * n + wrap_index(kx - n / 2, n)] =
          spectrum(ky, kx);
  const int dims[2] = {n, n};
  fft_inplace(buf, dims, FFTW_BACKWARD);
  FieldImage out(n, p);
  const double s = 1.0 / (scale2(p) * n * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      out(iy, ix) =
          s * buf[static_cast<std::size_t>(wrap_index(iy - n / 2, n)) * n + wrap_index(ix - n / 2, n)];
  return out;
}

void check_band(std::span<const Vec2> nodes, double pitch) {
  const double band = kPi / pitch;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (!(std::abs(nodes[k](0)) < band && std::abs(nodes[k](1)) < band))
      throw Error("frequency node " + std::to_string(k) + " outside band");
  }
}

void check_band(std::span<const Vec3> nodes, double pitch) {
  const double band = kPi / pitch;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (!(std::abs(nodes[k](0)) < band && std::abs(nodes[k](1)) < band &&
          std::abs(nodes[k](2)) < band))
      throw Error("frequency node " + std::to_string(k) + " outside band");
  }
}

// --- 3D ----------------------------------------------------------------------

struct Ndft3Evaluator::Impl {
  NdftOptions opts;
  int n = 0;
  double pitch = 1.0;
  ComplexVolume vol;  // direct path only
  EsKernel kernel{1e-10};
  int m = 0;
  std::vector<Complex> fine;
};

Ndft3Evaluator::Ndft3Evaluator(const ComplexVolume& vol, const NdftOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->opts = opts;
  impl_->n = vol.size();
  impl_->pitch = vol.pitch();
  if (opts.method == NdftMethod::Direct) {
    impl_->vol = vol;
    return;
  }
  impl_->kernel = EsKernel(opts.tolerance);
  const int n = vol.size();
  const int m = fine_size(n, impl_->kernel);
  impl_->m = m;
  const auto corr = impl_->kernel.deconvolution(n, m);
  impl_->fine.assign(static_cast<std::size_t>(m) * m * m, Complex{});
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t idx =
            (static_cast<std::size_t>(wrap_index(iz - n / 2, m)) * m + wrap_index(iy - n / 2, m)) * m +
            wrap_index(ix - n / 2, m);
        impl_->fine[idx] = vol(iz, iy, ix) * (corr[iz] * corr[iy] * corr[ix]);
      }
  const int dims[3] = {m, m, m};
  fft_inplace(impl_->fine, dims, FFTW_FORWARD);
}

Ndft3Evaluator::~Ndft3Evaluator() = default;
Ndft3Evaluator::Ndft3Evaluator(Ndft3Evaluator&&) noexcept = default;
Ndft3Evaluator& Ndft3Evaluator::operator=(Ndft3Evaluator&&) noexcept = default;

std::vector<Complex> Ndft3Evaluator::operator()(std::span<const Vec3> nodes) const {
  const Impl& im = *impl_;
  check_band(nodes, im.pitch);
  const double s = scale3(im.pitch);
  std::vector<Complex> out(nodes.size());

  if (im.opts.method == NdftMethod::Direct) {
    const int n = im.n;
    std::vector<Complex> ex(n), ey(n), ez(n);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Vec3 theta = nodes[k] * im.pitch;
      for (int i = 0; i < n; ++i) {
        const double j = i - n / 2;
        ex[i] = std::polar(1.0, -j * theta(0));
        ey[i] = std::polar(1.0, -j * theta(1));
        ez[i] = std::polar(1.0, -j * theta(2));
      }
      Complex acc{};
      for (int iz = 0; iz < n; ++iz) {
        Complex accy{};
        for (int iy = 0; iy < n; ++iy) {
          Complex accx{};
          const Complex* row = &im.vol(iz, iy, 0);
          for (int ix = 0; ix < n; ++ix) accx += row[ix] * ex[ix];
          accy += accx * ey[iy];
        }
        acc += accy * ez[iz];
      }
      out[k] = s * acc;
    }
    return out;
  }

  const int m = im.m;
  const int w = im.kernel.width();
  std::vector<double> wx(w), wy(w), wz(w);
  std::vector<int> ix(w);
  const double to_grid = m / (2.0 * kPi);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vec3 u = nodes[k] * (im.pitch * to_grid);
    const int lx = im.kernel.weights(u(0), wx.data());
    const int ly = im.kernel.weights(u(1), wy.data());
    const int lz = im.kernel.weights(u(2), wz.data());
    for (int a = 0; a < w; ++a) ix[a] = wrap_index(lx + a, m);
    Complex acc{};
    for (int c = 0; c < w; ++c) {
      const std::size_t zoff = static_cast<std::size_t>(wrap_index(lz + c, m)) * m;
      Complex accy{};
      for (int b = 0; b < w; ++b) {
        const Complex* row = &im.fine[(zoff + wrap_index(ly + b, m)) * m];
        Complex accx{};
        for (int a = 0; a < w; ++a) accx += row[ix[a]] * wx[a];
        accy += accx * wy[b];
      }
      acc += accy * wz[c];
    }
    out[k] = s * acc;
  }
  return out;
}

std::vector<Complex> ndft3(const ComplexVolume& vol, std::span<const Vec3> nodes,
                           const NdftOptions& opts) {
  check_band(nodes, vol.pitch());
  return Ndft3Evaluator(vol, opts)(nodes);
}

ComplexVolume ndft3_adjoint(std::span<const Complex> values, std::span<const Vec3> nodes,
                            int grid_n, double pitch, const NdftOptions& opts) {
  if (values.size() != nodes.size()) throw Error("ndft3_adjoint: values and nodes differ in length");
  check_band(nodes, pitch);
  ComplexVolume out(grid_n, pitch);
  const double s = scale3(pitch);
  const int n = grid_n;

  if (opts.method == NdftMethod::Direct) {
    std::vector<Complex> ex(n), ey(n), ez(n);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (values[k] == Complex{}) continue;
      const Vec3 theta = nodes[k] * pitch;
      for (int i = 0; i < n; ++i) {
        const double j = i - n / 2;
        ex[i] = std::polar(1.0, j * theta(0));
        ey[i] = std::polar(1.0, j * theta(1));
        ez[i] = std::polar(1.0, j * theta(2));
      }
      const Complex v = s * values[k];
      for (int iz = 0; iz < n; ++iz)
        for (int iy = 0; iy < n; ++iy) {
          const Complex vzy = v * ez[iz] * ey[iy];
          Complex* row = &out(iz, iy, 0);
          for (int ix = 0; ix < n; ++ix) row[ix] += vzy * ex[ix];
        }
    }
    return out;
  }

  const EsKernel kernel(opts.tolerance);
  const int m = fine_size(n, kernel);
  const int w = kernel.width();
  std::vector<Complex> fine(static_cast<std::size_t>(m) * m * m, Complex{});
  std::vector<double> wx(w), wy(w), wz(w);
  std::vector<int> ix(w);
  const double to_grid = m / (2.0 * kPi);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vec3 u = nodes[k] * (pitch * to_grid);
    const int lx = kernel.weights(u(0), wx.data());
    const int ly = kernel.weights(u(1), wy.data());
    const int lz = kernel.weights(u(2), wz.data());
    for (int a = 0; a < w; ++a) ix[a] = wrap_index(lx + a, m);
    for (int c = 0; c < w; ++c) {
      const Complex vz = values[k] * wz[c];
      const std::size_t zoff = static_cast<std::size_t>(wrap_index(lz + c, m)) * m;
      for (int b = 0; b < w; ++b) {
        const Complex vzy = vz * wy[b];
        Complex* row = &fine[(zoff + wrap_index(ly + b, m)) * m];
        for (int a = 0; a < w; ++a) row[ix[a]] += vzy * wx[a];
      }
    }
  }
  const int dims[3] = {m, m, m};
  fft_inplace(fine, dims, FFTW_BACKWARD);
  const auto corr = kernel.deconvolution(n, m);
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ixx = 0; ixx < n; ++ixx) {
        const std::size_t idx =
            (static_cast<std::size_t>(wrap_index(iz - n / 2, m)) * m + wrap_index(iy - n / 2, m)) * m +
            wrap_index(ixx - n / 2, m);
        out(iz, iy, ixx) = s * fine[idx] * (corr[iz] * corr[iy] * corr[ixx]);
      }
  return out;
}

// --- 2D ----------------------------------------------------------------------

struct Ndft2Evaluator::Impl {
  NdftOptions opts;
  int n = 0;
  double pitch = 1.0;
  FieldImage img;
  EsKernel kernel{1e-10};
  int m = 0;
  std::vector<Complex> fine;
};

Ndft2Evaluator::Ndft2Evaluator(const FieldImage& img, const NdftOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->opts = opts;
  impl_->n = img.size();
  impl_->pitch = img.pitch();
  if (opts.method == NdftMethod::Direct) {
    impl_->img = img;
    return;
  }
  impl_->kernel = EsKernel(opts.tolerance);
  const int n = img.size();
  const int m = fine_size(n, impl_->kernel);
  impl_->m = m;
  const auto corr = impl_->kernel.deconvolution(n, m);
  impl_->fine.assign(static_cast<std::size_t>(m) * m, Complex{});
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      impl_->fine[static_cast<std::size_t>(wrap_index(iy - n / 2, m)) * m + wrap_index(ix - n / 2, m)] =
          img(iy, ix) * (corr[iy] * corr[ix]);
  const int dims[2] = {m, m};
  fft_inplace(impl_->fine, dims, FFTW_FORWARD);
}

Ndft2Evaluator::~Ndft2Evaluator() = default;
Ndft2Evaluator::Ndft2Evaluator(Ndft2Evaluator&&) noexcept = default;
Ndft2Evaluator& Ndft2Evaluator::operator=(Ndft2Evaluator&&) noexcept = default;

std::vector<Complex> Ndft2Evaluator::operator()(std::span<const Vec2> nodes) const {
  const Impl& im = *impl_;
  check_band(nodes, im.pitch);
  const double s = scale2(im.pitch);
  std::vector<Complex> out(nodes.size());

  if (im.opts.method == NdftMethod::Direct) {
    const int n = im.n;
    std::vector<Complex> ex(n), ey(n);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Vec2 theta = nodes[k] * im.pitch;
      for (int i = 0; i < n; ++i) {
        const double j = i - n / 2;
        ex[i] = std::polar(1.0, -j * theta(0));
        ey[i] = std::polar(1.0, -j * theta(1));
      }
      Complex acc{};
      for (int iy = 0; iy < n; ++iy) {
        Complex accx{};
        const Complex* row = &im.img(iy, 0);
        for (int ix = 0; ix < n; ++ix) accx += row[ix] * ex[ix];
        acc += accx * ey[iy];
      }
      out[k] = s * acc;
    }
    return out;
  }

  const int m = im.m;
  const int w = im.kernel.width();
  std::vector<double> wx(w), wy(w);
  std::vector<int> ix(w);
  const double to_grid = m / (2.0 * kPi);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vec2 u = nodes[k] * (im.pitch * to_grid);
    const int lx = im.kernel.weights(u(0), wx.data());
    const int ly = im.kernel.weights(u(1), wy.data());
    for (int a = 0; a < w; ++a) ix[a] = wrap_index(lx + a, m);
    Complex acc{};
    for (int b = 0; b < w; ++b) {
      const Complex* row = &im.fine[static_cast<std::size_t>(wrap_index(ly + b, m)) * m];
      Complex accx{};
      for (int a = 0; a < w; ++a) accx += row[ix[a]] * wx[a];
      acc += accx * wy[b];
    }
    out[k] = s * acc;
  }
  return out;
}

std::vector<Complex> ndft2(const FieldImage& img, std::span<const Vec2> nodes,
                           const NdftOptions& opts) {
  check_band(nodes, img.pitch());
  return Ndft2Evaluator(img, opts)(nodes);
}

FieldImage ndft2_adjoint(std::span<const Complex> values, std::span<const Vec2> nodes, int grid_n,
                         double pitch, const NdftOptions& opts) {
  if (values.size() != nodes.size()) throw Error("ndft2_adjoint: values and nodes differ in length");
  check_band(nodes, pitch);
  const int n = grid_n;
  const double s = scale2(pitch);
  FieldImage out(n, pitch);
  if (opts.method == NdftMethod::Direct) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Vec2 theta = nodes[k] * pitch;
      for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
          out(iy, ix) +=
              s * values[k] * std::polar(1.0, (ix - n / 2) * theta(0) + (iy - n / 2) * theta(1));
    }
    return out;
  }
  const EsKernel kernel(opts.tolerance);
  const int m = fine_size(n, kernel);
  const int w = kernel.width();
  std::vector<Complex> fine(static_cast<std::size_t>(m) * m, Complex{});
  std::vector<double> wx(w), wy(w);
  const double to_grid = m / (2.0 * kPi);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vec2 u = nodes[k] * (pitch * to_grid);
    const int lx = kernel.weights(u(0), wx.data());
    const int ly = kernel.weights(u(1), wy.data());
    for (int b = 0; b < w; ++b) {
      Complex* row = &fine[static_cast<std::size_t>(wrap_index(ly + b, m)) * m];
      for (int a = 0; a < w; ++a) row[wrap_index(lx + a, m)] += values[k] * (wy[b] * wx[a]);
    }
  }
  const int dims[2] = {m, m};
  fft_inplace(fine, dims, FFTW_BACKWARD);
  const auto corr = kernel.deconvolution(n, m);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      out(iy, ix) =
          s * fine[static_cast<std::size_t>(wrap_index(iy - n / 2, m)) * m + wrap_index(ix - n / 2, m)] *
          (corr[iy] * corr[ix]);
  return out;
}

// --- polar -------------------------------------------------------------------

std::vector<Vec2> polar_nodes(std::span<const double> radii, std::span<const double> angles) {
  std::vector<Vec2> nodes;
  nodes.reserve(radii.size() * angles.size());
  for (double phi : angles) {
    const double c = std::cos(phi), s = std::sin(phi);
    for (double r : radii) nodes.emplace_back(r * c, r * s);
  }
  return nodes;
}

PolarSamples polar_samples(const FieldImage& img, std::span<const double> radii,
                           std::span<const double> angles, const NdftOptions& opts) {
  PolarSamples out;
  out.n_angles = static_cast<int>(angles.size());
  out.n_radii = static_cast<int>(radii.size());
  const auto nodes = polar_nodes(radii, angles);
  out.values = ndft2(img, nodes, opts);
  return out;
}

}  // namespace ccodt
