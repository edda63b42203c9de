#ifndef LFL_GRAPH_HPP
#define LFL_GRAPH_HPP

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lfl/serialize.hpp"
#include "lfl/tensor.hpp"

namespace lfl {

// Reverse-mode computation graph over dense tensors.
//
// A graph is built once (construction order is the topological order) and is
// immutable afterwards; evaluation state lives in Executor so a shared graph
// is safe to use from several threads at once.
class Graph {
 public:
  enum class Op {
    Input,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    ScalarMul,
    AddBias,
    Relu,
    Sigmoid,
    MeanAll,
    SumSquares,
    Conv2d,
    Upsample2,
    AvgPool2,
    ChannelNorm,
    InstanceNorm,
    ChanScaleShift,
    RowSelect,
    Reshape,
    BceLogits,
  };

  struct Node {
    Op op;
    std::vector<int> in;
    Shape shape;
    double c = 0.0;  // ScalarMul factor / ChannelNorm eps
    Index aux = 0;   // RowSelect row
    std::string name;
    Tensor value;  // Constant payload
  };

  int input(const std::string& name, Shape shape);
  int constant(Tensor t, const std::string& name = "");

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scalar_mul(int a, double c);
  int add_bias(int x, int b);  // rows of x (m x n) plus bias (n); rank-1 x allowed
  int relu(int a);
  int sigmoid(int a);
  int mean_all(int a);     // -> scalar
  int sum_squares(int a);  // -> scalar
  // x: Cin x H x W, k: Cout x Cin x 3 x 3, b: Cout; same padding, stride 1
  int conv2d(int x, int k, int b);
  int upsample2(int x);  // nearest neighbour, factor 2
  int avgpool2(int x);   // 2x2 mean, stride 2
  int channel_norm(int x, double eps = 1e-8);   // unit-norm channel vector per pixel
  int instance_norm(int x, double eps = 1e-8);  // zero-mean unit-var per feature map
  int chan_scale_shift(int x, int scale, int shift);
  int row_select(int m, Index row);
  int reshape(int a, Shape s);
  int bce_logits(int logits, int labels);  // mean binary cross entropy, -> scalar

  void mark_output(const std::string& name, int node);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  const Shape& shape_of(int i) const { return nodes_[static_cast<size_t>(i)].shape; }
  int output_node(const std::string& name) const;
  int input_node(const std::string& name) const;
  const std::vector<std::string>& input_names() const { return input_names_; }

  // One-shot interfaces (build a throwaway Executor).
  TensorMap evaluate(const TensorMap& inputs) const;
  std::pair<double, TensorMap> gradient(const TensorMap& inputs, const std::string& output,
                                        const std::vector<std::string>& wrt) const;

 private:
  friend class Executor;
  int push(Node n);
  const Node& check(int id, const char* ctx) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> inputs_;
  std::vector<std::string> input_names_;
  std::map<std::string, int> outputs_;
};

// Reusable evaluation workspace for one graph. Buffers are allocated once and
// reused across forward/backward calls; bound inputs are held by pointer.
class Executor {
 public:
  explicit Executor(const Graph& g);

  void bind(const std::string& name, const Tensor& t);
  void forward();
  const Tensor& value(int node) const;
  const Tensor& output(const std::string& name) const;
  double scalar_output(const std::string& name) const;

  // Reverse pass from a scalar output node. Gradients become available for
  // every input reachable from it; disconnected inputs read as zero.
  void backward(int scalar_node);
  void backward(const std::string& output_name);
  const Tensor& input_grad(const std::string& input_name);

 private:
  const Tensor& in_val(int node, int slot) const;
  void compute(int id);
  void propagate(int id);
  Tensor& grad_buf(int id);

  const Graph& g_;
  std::vector<const Tensor*> bound_;
  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<char> has_grad_;
  std::vector<char> needed_;
  std::vector<Tensor> scratch_;  // conv im2col patches
  bool ran_forward_ = false;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double worst() const;
  bool passed() const;
};

// Central finite differences vs reverse mode, per wrt input, entrywise max of
// |a-b| / max(1, |a|, |b|).
GradCheckReport check_gradients(const Graph& g, const TensorMap& inputs,
                                const std::string& output, const std::vector<std::string>& wrt,
                                double tolerance, double fd_step = 1e-5);

}  // namespace lfl

#endif
