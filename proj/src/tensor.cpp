#include "tdet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace tdet {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  // memcmp so that the comparison is bitwise (distinguishes -0.0 and NaNs).
  return a.data_.empty() ||
         std::memcmp(a.data_.data(), b.data_.data(),
                     a.data_.size() * sizeof(double)) == 0;
}

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [C,H,W], got " +
                     shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels,
                           std::size_t stride, std::size_t padding) {
  require_chw(input, "conv2d input");
  if (kernels.rank() != 4) {
    throw ShapeError("conv2d: kernels must be [Cout,Cin,kh,kw], got " +
                     shape_str(kernels.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeometry g{input.dim(0),   input.dim(1),   input.dim(2), kernels.dim(0),
                 kernels.dim(2), kernels.dim(3), 0,            0};
  if (kernels.dim(1) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) +
                     " channels, kernels expect " +
                     std::to_string(kernels.dim(1)));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ContractError("conv2d: kernel dims must be odd");
  }
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Output columns [lo, hi) whose tap at kernel offset k lands inside [0, w).
inline void valid_range(std::size_t k, std::size_t stride, std::size_t padding,
                        std::size_t w, std::size_t ow, std::size_t& lo,
                        std::size_t& hi) {
  // ix = o*stride + k - padding must satisfy 0 <= ix < w.
  const auto kk = static_cast<std::ptrdiff_t>(k);
  const auto p = static_cast<std::ptrdiff_t>(padding);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t first = 0;
  if (kk < p) first = (p - kk + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(w) - 1 + p - kk);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(
      std::min<std::ptrdiff_t>(last + 1, static_cast<std::ptrdiff_t>(ow)));
  if (hi < lo) hi = lo;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding) {
  const auto g = conv_geometry(input, kernels, stride, padding);
  Tensor out({g.cout, g.oh, g.ow});
  const double* in = input.raw();
  const double* kp = kernels.raw();
  double* op = out.raw();
  for (std::size_t oc = 0; oc < g.cout; ++oc) {
    double* oplane = op + oc * g.oh * g.ow;
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
      const double* iplane = in + ic * g.h * g.w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t ylo, yhi;
        valid_range(ky, stride, padding, g.h, g.oh, ylo, yhi);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          std::size_t xlo, xhi;
          valid_range(kx, stride, padding, g.w, g.ow, xlo, xhi);
          const double wv = kp[((oc * g.cin + ic) * g.kh + ky) * g.kw + kx];
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const double* irow = iplane + (oy * stride + ky - padding) * g.w;
            double* orow = oplane + oy * g.ow;
            for (std::size_t ox = xlo; ox < xhi; ++ox) {
              orow[ox] += wv * irow[ox * stride + kx - padding];
            }
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels,
                     std::size_t stride, std::size_t padding,
                     const Tensor& grad_out, Tensor* grad_input,
                     Tensor* grad_kernels) {
  const auto g = conv_geometry(input, kernels, stride, padding);
  if (grad_out.shape() != Shape{g.cout, g.oh, g.ow}) {
    throw ShapeError("conv2d_backward: grad shape " +
                     shape_str(grad_out.shape()));
  }
  if (grad_input) *grad_input = Tensor(input.shape());
  if (grad_kernels) *grad_kernels = Tensor(kernels.shape());
  const double* in = input.raw();
  const double* kp = kernels.raw();
  const double* gp = grad_out.raw();
  for (std::size_t oc = 0; oc < g.cout; ++oc) {
    const double* gplane = gp + oc * g.oh * g.ow;
    for (std::size_t ic = 0; ic < g.cin; ++ic) {
      const std::size_t in_off = ic * g.h * g.w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t ylo, yhi;
        valid_range(ky, stride, padding, g.h, g.oh, ylo, yhi);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          std::size_t xlo, xhi;
          valid_range(kx, stride, padding, g.w, g.ow, xlo, xhi);
          const std::size_t kidx = ((oc * g.cin + ic) * g.kh + ky) * g.kw + kx;
          const double wv = kp[kidx];
          double acc = 0.0;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const std::size_t row = in_off + (oy * stride + ky - padding) * g.w;
            const double* grow = gplane + oy * g.ow;
            if (grad_input) {
              double* girow = grad_input->raw() + row;
              for (std::size_t ox = xlo; ox < xhi; ++ox) {
                girow[ox * stride + kx - padding] += wv * grow[ox];
              }
            }
            const double* irow = in + row;
            for (std::size_t ox = xlo; ox < xhi; ++ox) {
              acc += grow[ox] * irow[ox * stride + kx - padding];
            }
          }
          if (grad_kernels) grad_kernels->raw()[kidx] += acc;
        }
      }
    }
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Tensor elementwise(Unary op, const Tensor& x) {
  Tensor out(x.shape());
  const double* in = x.raw();
  double* o = out.raw();
  const std::size_t n = x.size();
  switch (op) {
    case Unary::sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = sigmoid(in[i]);
      break;
    case Unary::tanh:
      for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]);
      break;
    case Unary::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) {
        o[i] = in[i] > 0.0 ? in[i] : kLeakySlope * in[i];
      }
      break;
  }
  return out;
}

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
  require_same(a, b, "elementwise");
  Tensor out(a.shape());
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* o = out.raw();
  const std::size_t n = a.size();
  switch (op) {
    case Binary::add:
      for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i];
      break;
    case Binary::sub:
      for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] - pb[i];
      break;
    case Binary::mul:
      for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_chw(x, "add_channel_bias");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) +
                     " for input " + shape_str(x.shape()));
  }
  Tensor out = x;
  const std::size_t plane = x.dim(1) * x.dim(2);
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    double* p = out.raw() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_chw(a, "concat_channels");
  require_chw(b, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: spatial mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_chw(x, "slice_channels");
  if (begin > end || end > x.dim(0)) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  std::vector<double> data(x.raw() + begin * plane, x.raw() + end * plane);
  return Tensor({end - begin, x.dim(1), x.dim(2)}, std::move(data));
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

std::uint64_t checksum(const Tensor& x) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (auto d : x.shape()) {
    const std::uint64_t v = d;
    mix(&v, sizeof v);
  }
  if (!x.empty()) mix(x.raw(), x.size() * sizeof(double));
  return h;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("read_tensor: truncated header");
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
}

Tensor read_tensor(std::istream& in) {
  const std::uint32_t rank = get_u32(in);
  if (rank > 8) throw std::runtime_error("read_tensor: implausible rank");
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(in);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
      throw std::runtime_error("read_tensor: truncated payload");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace tdet
