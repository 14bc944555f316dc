#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdet {

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Tensors are plain values: copying copies the payload. After construction a
/// tensor handed to another component is treated as immutable, so concurrent
/// readers need no synchronisation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const double* raw() const noexcept { return data_.data(); }
  double* raw() noexcept { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // 3-D accessors for [C,H,W] maps.
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Scalar value of a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;

  /// Bitwise equality of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Pure kernels. The autodiff tape reuses these for its forward values, so
// taped and untaped computations agree bit for bit.
// ---------------------------------------------------------------------------

/// Cross-correlation (no kernel flip). input [Cin,H,W], kernels [Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding);

/// Gradients of conv2d given the upstream gradient of its output.
void conv2d_backward(const Tensor& input, const Tensor& kernels,
                     std::size_t stride, std::size_t padding,
                     const Tensor& grad_out, Tensor* grad_input,
                     Tensor* grad_kernels);

enum class Unary { sigmoid, tanh, leaky_relu };
enum class Binary { add, sub, mul };

inline constexpr double kLeakySlope = 0.1;

double sigmoid(double x) noexcept;
double softplus(double x) noexcept;

Tensor elementwise(Unary op, const Tensor& x);
Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);

/// x [C,H,W] plus per-channel bias [C].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

/// Channels of `a` first, then `b`.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Channels [begin, end) of a [C,H,W] tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

double sum(const Tensor& x);

/// FNV-1a over shape and payload bytes; used for freeze checks.
std::uint64_t checksum(const Tensor& x);

// Little-endian: u32 rank, u32 dims..., f64 payload row-major.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace tdet
