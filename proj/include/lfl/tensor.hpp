#ifndef LFL_TENSOR_HPP
#define LFL_TENSOR_HPP

#include <Eigen/Dense>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfl {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatrixRM>;
using ConstMapMat = Eigen::Map<const MatrixRM>;

// Dense row-major real tensor, 64-bit precision throughout.
struct Tensor {
  Shape shape;
  Eigen::ArrayXd data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(Eigen::ArrayXd::Zero(shape_size(shape))) {}
  Tensor(Shape s, Eigen::ArrayXd d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape))
      throw Error("tensor: data size " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v) {
    Tensor t(std::move(s));
    t.data.setConstant(v);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t{Shape{}, Eigen::ArrayXd::Constant(1, v)};
    return t;
  }
  static Tensor from_vector(const std::vector<double>& v) {
    Tensor t(Shape{static_cast<Index>(v.size())});
    for (size_t i = 0; i < v.size(); ++i) t.data[static_cast<Index>(i)] = v[i];
    return t;
  }

  Index size() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }
  double value() const {
    if (size() != 1) throw Error("tensor: value() on non-scalar " + shape_str(shape));
    return data[0];
  }

  double& operator[](Index i) { return data[i]; }
  double operator[](Index i) const { return data[i]; }

  // rank-2 views
  MapMat mat() { return MapMat(data.data(), shape.at(0), shape.at(1)); }
  ConstMapMat mat() const { return ConstMapMat(data.data(), shape.at(0), shape.at(1)); }

  double& at(Index i, Index j) { return data[i * shape.at(1) + j]; }
  double at(Index i, Index j) const { return data[i * shape.at(1) + j]; }
  // rank-3 (c, y, x)
  double& at(Index c, Index y, Index x) {
    return data[(c * shape.at(1) + y) * shape.at(2) + x];
  }
  double at(Index c, Index y, Index x) const {
    return data[(c * shape.at(1) + y) * shape.at(2) + x];
  }

  bool all_finite() const { return data.allFinite(); }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size())
      throw Error("tensor: reshape " + shape_str(shape) + " -> " + shape_str(s));
    return Tensor(std::move(s), data);
  }
};

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace lfl

#endif
