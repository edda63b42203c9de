#include "lfl/graph.hpp"

#include <algorithm>
#include <cmath>

namespace lfl {

namespace {

std::string op_name(Graph::Op op) {
  switch (op) {
    case Graph::Op::Input: return "input";
    case Graph::Op::Constant: return "constant";
    case Graph::Op::MatMul: return "matmul";
    case Graph::Op::Add: return "add";
    case Graph::Op::Sub: return "sub";
    case Graph::Op::Mul: return "mul";
    case Graph::Op::ScalarMul: return "scalar_mul";
    case Graph::Op::AddBias: return "add_bias";
    case Graph::Op::Relu: return "relu";
    case Graph::Op::Sigmoid: return "sigmoid";
    case Graph::Op::MeanAll: return "mean_all";
    case Graph::Op::SumSquares: return "sum_squares";
    case Graph::Op::Conv2d: return "conv2d";
    case Graph::Op::Upsample2: return "upsample2";
    case Graph::Op::AvgPool2: return "avgpool2";
    case Graph::Op::ChannelNorm: return "channel_norm";
    case Graph::Op::InstanceNorm: return "instance_norm";
    case Graph::Op::ChanScaleShift: return "chan_scale_shift";
    case Graph::Op::RowSelect: return "row_select";
    case Graph::Op::Reshape: return "reshape";
    case Graph::Op::BceLogits: return "bce_logits";
  }
  return "?";
}

std::string node_desc(const Graph::Node& n, int id) {
  std::string s = "node #" + std::to_string(id) + " (" + op_name(n.op);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Graph::Node& Graph::check(int id, const char* ctx) const {
  if (id < 0 || id >= node_count())
    throw Error(std::string("graph: bad node id in ") + ctx);
  return nodes_[static_cast<size_t>(id)];
}

int Graph::input(const std::string& name, Shape shape) {
  if (inputs_.count(name)) throw Error("graph: duplicate input '" + name + "'");
  int id = push({Op::Input, {}, std::move(shape), 0.0, 0, name, {}});
  inputs_[name] = id;
  input_names_.push_back(name);
  return id;
}

int Graph::constant(Tensor t, const std::string& name) {
  Shape s = t.shape;
  if (!t.all_finite()) throw Error("graph: constant '" + name + "' has non-finite values");
  return push({Op::Constant, {}, std::move(s), 0.0, 0, name, std::move(t)});
}

int Graph::matmul(int a, int b) {
  const Node& na = check(a, "matmul");
  const Node& nb = check(b, "matmul");
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    throw Error("graph: matmul shape mismatch " + shape_str(na.shape) + " * " + shape_str(nb.shape));
  return push({Op::MatMul, {a, b}, {na.shape[0], nb.shape[1]}, 0.0, 0, "", {}});
}

int Graph::add(int a, int b) {
  if (check(a, "add").shape != check(b, "add").shape)
    throw Error("graph: add shape mismatch " + shape_str(nodes_[size_t(a)].shape) + " vs " +
                shape_str(nodes_[size_t(b)].shape));
  return push({Op::Add, {a, b}, nodes_[size_t(a)].shape, 0.0, 0, "", {}});
}

int Graph::sub(int a, int b) {
  if (check(a, "sub").shape != check(b, "sub").shape)
    throw Error("graph: sub shape mismatch " + shape_str(nodes_[size_t(a)].shape) + " vs " +
                shape_str(nodes_[size_t(b)].shape));
  return push({Op::Sub, {a, b}, nodes_[size_t(a)].shape, 0.0, 0, "", {}});
}

int Graph::mul(int a, int b) {
  if (check(a, "mul").shape != check(b, "mul").shape)
    throw Error("graph: mul shape mismatch " + shape_str(nodes_[size_t(a)].shape) + " vs " +
                shape_str(nodes_[size_t(b)].shape));
  return push({Op::Mul, {a, b}, nodes_[size_t(a)].shape, 0.0, 0, "", {}});
}

int Graph::scalar_mul(int a, double c) {
  return push({Op::ScalarMul, {a}, check(a, "scalar_mul").shape, c, 0, "", {}});
}

int Graph::add_bias(int x, int b) {
  const Node& nx = check(x, "add_bias");
  const Node& nb = check(b, "add_bias");
  if (nb.shape.size() != 1) throw Error("graph: add_bias bias must be rank 1");
  Index cols = nx.shape.empty() ? -1 : nx.shape.back();
  if ((nx.shape.size() != 1 && nx.shape.size() != 2) || cols != nb.shape[0])
    throw Error("graph: add_bias shape mismatch " + shape_str(nx.shape) + " + " + shape_str(nb.shape));
  return push({Op::AddBias, {x, b}, nx.shape, 0.0, 0, "", {}});
}

int Graph::relu(int a) { return push({Op::Relu, {a}, check(a, "relu").shape, 0.0, 0, "", {}}); }

int Graph::sigmoid(int a) {
  return push({Op::Sigmoid, {a}, check(a, "sigmoid").shape, 0.0, 0, "", {}});
}

int Graph::mean_all(int a) {
  check(a, "mean_all");
  return push({Op::MeanAll, {a}, Shape{}, 0.0, 0, "", {}});
}

int Graph::sum_squares(int a) {
  check(a, "sum_squares");
  return push({Op::SumSquares, {a}, Shape{}, 0.0, 0, "", {}});
}

int Graph::conv2d(int x, int k, int b) {
  const Node& nx = check(x, "conv2d");
  const Node& nk = check(k, "conv2d");
  const Node& nb = check(b, "conv2d");
  if (nx.shape.size() != 3) throw Error("graph: conv2d input must be C x H x W");
  if (nk.shape.size() != 4 || nk.shape[2] != 3 || nk.shape[3] != 3)
    throw Error("graph: conv2d kernel must be Cout x Cin x 3 x 3");
  if (nk.shape[1] != nx.shape[0])
    throw Error("graph: conv2d channel mismatch " + shape_str(nx.shape) + " with kernel " +
                shape_str(nk.shape));
  if (nb.shape.size() != 1 || nb.shape[0] != nk.shape[0])
    throw Error("graph: conv2d bias must have Cout entries");
  return push({Op::Conv2d, {x, k, b}, {nk.shape[0], nx.shape[1], nx.shape[2]}, 0.0, 0, "", {}});
}

int Graph::upsample2(int x) {
  const Node& nx = check(x, "upsample2");
  if (nx.shape.size() != 3) throw Error("graph: upsample2 input must be C x H x W");
  return push({Op::Upsample2, {x}, {nx.shape[0], nx.shape[1] * 2, nx.shape[2] * 2}, 0.0, 0, "", {}});
}

int Graph::avgpool2(int x) {
  const Node& nx = check(x, "avgpool2");
  if (nx.shape.size() != 3 || nx.shape[1] % 2 != 0 || nx.shape[2] % 2 != 0)
    throw Error("graph: avgpool2 needs C x H x W with even H, W");
  return push({Op::AvgPool2, {x}, {nx.shape[0], nx.shape[1] / 2, nx.shape[2] / 2}, 0.0, 0, "", {}});
}

int Graph::channel_norm(int x, double eps) {
  const Node& nx = check(x, "channel_norm");
  if (nx.shape.size() != 3) throw Error("graph: channel_norm input must be C x H x W");
  return push({Op::ChannelNorm, {x}, nx.shape, eps, 0, "", {}});
}

int Graph::instance_norm(int x, double eps) {
  const Node& nx = check(x, "instance_norm");
  if (nx.shape.size() != 3) throw Error("graph: instance_norm input must be C x H x W");
  return push({Op::InstanceNorm, {x}, nx.shape, eps, 0, "", {}});
}

int Graph::chan_scale_shift(int x, int scale, int shift) {
  const Node& nx = check(x, "chan_scale_shift");
  const Node& ns = check(scale, "chan_scale_shift");
  const Node& nt = check(shift, "chan_scale_shift");
  if (nx.shape.size() != 3) throw Error("graph: chan_scale_shift input must be C x H x W");
  if (ns.shape != Shape{nx.shape[0]} || nt.shape != Shape{nx.shape[0]})
    throw Error("graph: chan_scale_shift scale/shift must have C entries");
  return push({Op::ChanScaleShift, {x, scale, shift}, nx.shape, 0.0, 0, "", {}});
}

int Graph::row_select(int m, Index row) {
  const Node& nm = check(m, "row_select");
  if (nm.shape.size() != 2) throw Error("graph: row_select input must be rank 2");
  if (row < 0 || row >= nm.shape[0]) throw Error("graph: row_select row out of range");
  return push({Op::RowSelect, {m}, Shape{nm.shape[1]}, 0.0, row, "", {}});
}

int Graph::reshape(int a, Shape s) {
  const Node& na = check(a, "reshape");
  if (shape_size(s) != shape_size(na.shape))
    throw Error("graph: reshape size mismatch " + shape_str(na.shape) + " -> " + shape_str(s));
  return push({Op::Reshape, {a}, std::move(s), 0.0, 0, "", {}});
}

int Graph::bce_logits(int logits, int labels) {
  if (check(logits, "bce_logits").shape != check(labels, "bce_logits").shape)
    throw Error("graph: bce_logits logits/labels shape mismatch");
  return push({Op::BceLogits, {logits, labels}, Shape{}, 0.0, 0, "", {}});
}

void Graph::mark_output(const std::string& name, int node) {
  check(node, "mark_output");
  outputs_[name] = node;
}

int Graph::output_node(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw Error("graph: unknown output '" + name + "'");
  return it->second;
}

int Graph::input_node(const std::string& name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw Error("graph: unknown input '" + name + "'");
  return it->second;
}

TensorMap Graph::evaluate(const TensorMap& inputs) const {
  Executor ex(*this);
  for (const auto& [name, t] : inputs) ex.bind(name, t);
  ex.forward();
  TensorMap out;
  for (const auto& [name, id] : outputs_) out[name] = ex.value(id);
  return out;
}

std::pair<double, TensorMap> Graph::gradient(const TensorMap& inputs, const std::string& output,
                                             const std::vector<std::string>& wrt) const {
  Executor ex(*this);
  for (const auto& [name, t] : inputs) ex.bind(name, t);
  ex.forward();
  ex.backward(output);
  TensorMap grads;
  for (const auto& name : wrt) grads[name] = ex.input_grad(name);
  return {ex.value(output_node(output)).value(), std::move(grads)};
}

// ---------------------------------------------------------------------------
// Executor

Executor::Executor(const Graph& g) : g_(g) {
  int n = g.node_count();
  bound_.assign(static_cast<size_t>(n), nullptr);
  vals_.resize(static_cast<size_t>(n));
  grads_.resize(static_cast<size_t>(n));
  needed_.assign(static_cast<size_t>(n), 0);
  scratch_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& nd = g.node(i);
    if (nd.op != Graph::Op::Input && nd.op != Graph::Op::Constant)
      vals_[static_cast<size_t>(i)] = Tensor(nd.shape);
  }
}

void Executor::bind(const std::string& name, const Tensor& t) {
  int id = g_.input_node(name);
  const auto& nd = g_.node(id);
  if (t.shape != nd.shape)
    throw Error("graph: input '" + name + "' expects " + shape_str(nd.shape) + ", got " +
                shape_str(t.shape));
  bound_[static_cast<size_t>(id)] = &t;
}

const Tensor& Executor::value(int id) const {
  const auto& nd = g_.node(id);
  if (nd.op == Graph::Op::Input) {
    const Tensor* b = bound_[static_cast<size_t>(id)];
    if (!b) throw Error("graph: input '" + nd.name + "' not bound");
    return *b;
  }
  if (nd.op == Graph::Op::Constant) return nd.value;
  return vals_[static_cast<size_t>(id)];
}

const Tensor& Executor::in_val(int id, int slot) const {
  return value(g_.node(id).in[static_cast<size_t>(slot)]);
}

const Tensor& Executor::output(const std::string& name) const {
  return value(g_.output_node(name));
}

double Executor::scalar_output(const std::string& name) const { return output(name).value(); }

void Executor::forward() {
  int n = g_.node_count();
  for (int i = 0; i < n; ++i) {
    const auto& nd = g_.node(i);
    if (nd.op == Graph::Op::Input) {
      const Tensor* b = bound_[static_cast<size_t>(i)];
      if (!b) throw Error("graph: input '" + nd.name + "' not bound");
      if (!b->all_finite()) throw Error("graph: non-finite values in " + node_desc(nd, i));
      continue;
    }
    if (nd.op == Graph::Op::Constant) continue;
    compute(i);
    if (!vals_[static_cast<size_t>(i)].all_finite())
      throw Error("graph: non-finite intermediate at " + node_desc(nd, i));
  }
  ran_forward_ = true;
}

void Executor::compute(int id) {
  const auto& nd = g_.node(id);
  Tensor& out = vals_[static_cast<size_t>(id)];
  using Op = Graph::Op;
  switch (nd.op) {
    case Op::MatMul: {
      const Tensor& a = in_val(id, 0);
      const Tensor& b = in_val(id, 1);
      out.mat().noalias() = a.mat() * b.mat();
      break;
    }
    case Op::Add:
      out.data = in_val(id, 0).data + in_val(id, 1).data;
      break;
    case Op::Sub:
      out.data = in_val(id, 0).data - in_val(id, 1).data;
      break;
    case Op::Mul:
      out.data = in_val(id, 0).data * in_val(id, 1).data;
      break;
    case Op::ScalarMul:
      out.data = nd.c * in_val(id, 0).data;
      break;
    case Op::AddBias: {
      const Tensor& x = in_val(id, 0);
      const Tensor& b = in_val(id, 1);
      if (x.rank() == 1) {
        out.data = x.data + b.data;
      } else {
        Index rows = x.shape[0], cols = x.shape[1];
        ConstMapMat xm(x.data.data(), rows, cols);
        MapMat om(out.data.data(), rows, cols);
        om = xm;
        om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), cols);
      }
      break;
    }
    case Op::Relu:
      out.data = in_val(id, 0).data.max(0.0);
      break;
    case Op::Sigmoid:
      out.data = 1.0 / (1.0 + (-in_val(id, 0).data).exp());
      break;
    case Op::MeanAll:
      out.data[0] = in_val(id, 0).data.mean();
      break;
    case Op::SumSquares:
      out.data[0] = in_val(id, 0).data.square().sum();
      break;
    case Op::Conv2d: {
      const Tensor& x = in_val(id, 0);
      const Tensor& k = in_val(id, 1);
      const Tensor& b = in_val(id, 2);
      Index cin = x.shape[0], h = x.shape[1], w = x.shape[2];
      Index cout = k.shape[0];
      Index hw = h * w, pr = cin * 9;
      Tensor& patches = scratch_[static_cast<size_t>(id)];
      if (patches.size() != pr * hw) patches = Tensor({pr, hw});
      patches.data.setZero();
      for (Index c = 0; c < cin; ++c) {
        for (Index ky = 0; ky < 3; ++ky) {
          for (Index kx = 0; kx < 3; ++kx) {
            Index dy = ky - 1, dx = kx - 1;
            Index r = (c * 3 + ky) * 3 + kx;
            double* prow = patches.data.data() + r * hw;
            for (Index i = 0; i < h; ++i) {
              Index si = i + dy;
              if (si < 0 || si >= h) continue;
              Index j0 = std::max<Index>(0, -dx);
              Index j1 = std::min<Index>(w, w - dx);
              const double* src = x.data.data() + (c * h + si) * w + (j0 + dx);
              std::copy(src, src + (j1 - j0), prow + i * w + j0);
            }
          }
        }
      }
      ConstMapMat km(k.data.data(), cout, pr);
      ConstMapMat pm(patches.data.data(), pr, hw);
      MapMat om(out.data.data(), cout, hw);
      om.noalias() = km * pm;
      om.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data.data(), cout);
      break;
    }
    case Op::Upsample2: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], h = x.shape[1], w = x.shape[2];
      for (Index cc = 0; cc < c; ++cc)
        for (Index i = 0; i < h; ++i) {
          const double* src = x.data.data() + (cc * h + i) * w;
          double* d0 = out.data.data() + (cc * 2 * h + 2 * i) * 2 * w;
          double* d1 = d0 + 2 * w;
          for (Index j = 0; j < w; ++j) {
            d0[2 * j] = d0[2 * j + 1] = d1[2 * j] = d1[2 * j + 1] = src[j];
          }
        }
      break;
    }
    case Op::AvgPool2: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], h = x.shape[1], w = x.shape[2];
      Index oh = h / 2, ow = w / 2;
      for (Index cc = 0; cc < c; ++cc)
        for (Index i = 0; i < oh; ++i) {
          const double* s0 = x.data.data() + (cc * h + 2 * i) * w;
          const double* s1 = s0 + w;
          double* dst = out.data.data() + (cc * oh + i) * ow;
          for (Index j = 0; j < ow; ++j)
            dst[j] = 0.25 * (s0[2 * j] + s0[2 * j + 1] + s1[2 * j] + s1[2 * j + 1]);
        }
      break;
    }
    case Op::ChannelNorm: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      Tensor& invr = scratch_[static_cast<size_t>(id)];
      if (invr.size() != hw) invr = Tensor({hw});
      for (Index p = 0; p < hw; ++p) {
        double s = nd.c;  // eps
        for (Index cc = 0; cc < c; ++cc) {
          double v = x.data[cc * hw + p];
          s += v * v;
        }
        invr.data[p] = 1.0 / std::sqrt(s);
      }
      for (Index cc = 0; cc < c; ++cc)
        for (Index p = 0; p < hw; ++p) out.data[cc * hw + p] = x.data[cc * hw + p] * invr.data[p];
      break;
    }
    case Op::InstanceNorm: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      Tensor& stats = scratch_[static_cast<size_t>(id)];  // per map: mean, 1/std
      if (stats.size() != 2 * c) stats = Tensor({2 * c});
      for (Index cc = 0; cc < c; ++cc) {
        auto seg = x.data.segment(cc * hw, hw);
        double mu = seg.mean();
        double var = (seg - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + nd.c);
        stats.data[2 * cc] = mu;
        stats.data[2 * cc + 1] = inv;
        out.data.segment(cc * hw, hw) = (seg - mu) * inv;
      }
      break;
    }
    case Op::ChanScaleShift: {
      const Tensor& x = in_val(id, 0);
      const Tensor& s = in_val(id, 1);
      const Tensor& t = in_val(id, 2);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      for (Index cc = 0; cc < c; ++cc)
        out.data.segment(cc * hw, hw) = x.data.segment(cc * hw, hw) * s.data[cc] + t.data[cc];
      break;
    }
    case Op::RowSelect: {
      const Tensor& m = in_val(id, 0);
      Index cols = m.shape[1];
      out.data = m.data.segment(nd.aux * cols, cols);
      break;
    }
    case Op::Reshape:
      out.data = in_val(id, 0).data;
      break;
    case Op::BceLogits: {
      const Tensor& z = in_val(id, 0);
      const Tensor& y = in_val(id, 1);
      double acc = 0.0;
      for (Index i = 0; i < z.size(); ++i) {
        double zi = z.data[i];
        acc += std::max(zi, 0.0) - zi * y.data[i] + std::log1p(std::exp(-std::abs(zi)));
      }
      out.data[0] = acc / static_cast<double>(z.size());
      break;
    }
    case Op::Input:
    case Op::Constant:
      break;
  }
}

Tensor& Executor::grad_buf(int id) {
  Tensor& gb = grads_[static_cast<size_t>(id)];
  if (gb.size() != shape_size(g_.shape_of(id)) || gb.shape != g_.shape_of(id)) {
    gb = Tensor(g_.shape_of(id));
  }
  return gb;
}

void Executor::backward(const std::string& output_name) { backward(g_.output_node(output_name)); }

void Executor::backward(int scalar_node) {
  if (!ran_forward_) throw Error("graph: backward before forward");
  const auto& nd = g_.node(scalar_node);
  if (shape_size(nd.shape) != 1)
    throw Error("graph: backward target must be scalar, got " + shape_str(nd.shape) + " at " +
                node_desc(nd, scalar_node));
  std::fill(needed_.begin(), needed_.end(), 0);
  needed_[static_cast<size_t>(scalar_node)] = 1;
  for (int i = scalar_node; i >= 0; --i)
    if (needed_[static_cast<size_t>(i)])
      for (int in : g_.node(i).in) needed_[static_cast<size_t>(in)] = 1;
  for (int i = 0; i <= scalar_node; ++i)
    if (needed_[static_cast<size_t>(i)]) grad_buf(i).data.setZero();
  grad_buf(scalar_node).data[0] = 1.0;
  for (int i = scalar_node; i >= 0; --i)
    if (needed_[static_cast<size_t>(i)]) propagate(i);
}

void Executor::propagate(int id) {
  const auto& nd = g_.node(id);
  using Op = Graph::Op;
  if (nd.op == Op::Input || nd.op == Op::Constant) return;
  const Tensor& g = grads_[static_cast<size_t>(id)];
  auto gin = [&](int slot) -> Tensor& { return grad_buf(nd.in[static_cast<size_t>(slot)]); };
  switch (nd.op) {
    case Op::MatMul: {
      const Tensor& a = in_val(id, 0);
      const Tensor& b = in_val(id, 1);
      ConstMapMat gm(g.data.data(), nd.shape[0], nd.shape[1]);
      gin(0).mat().noalias() += gm * b.mat().transpose();
      gin(1).mat().noalias() += a.mat().transpose() * gm;
      break;
    }
    case Op::Add:
      gin(0).data += g.data;
      gin(1).data += g.data;
      break;
    case Op::Sub:
      gin(0).data += g.data;
      gin(1).data -= g.data;
      break;
    case Op::Mul:
      gin(0).data += g.data * in_val(id, 1).data;
      gin(1).data += g.data * in_val(id, 0).data;
      break;
    case Op::ScalarMul:
      gin(0).data += nd.c * g.data;
      break;
    case Op::AddBias: {
      const Tensor& x = in_val(id, 0);
      gin(0).data += g.data;
      if (x.rank() == 1) {
        gin(1).data += g.data;
      } else {
        ConstMapMat gm(g.data.data(), x.shape[0], x.shape[1]);
        Eigen::Map<Eigen::RowVectorXd>(gin(1).data.data(), x.shape[1]) += gm.colwise().sum();
      }
      break;
    }
    case Op::Relu:
      gin(0).data += g.data * (in_val(id, 0).data > 0.0).cast<double>();
      break;
    case Op::Sigmoid: {
      const Tensor& y = vals_[static_cast<size_t>(id)];
      gin(0).data += g.data * y.data * (1.0 - y.data);
      break;
    }
    case Op::MeanAll:
      gin(0).data += (g.data[0] / static_cast<double>(in_val(id, 0).size())) *
                     Eigen::ArrayXd::Ones(in_val(id, 0).size());
      break;
    case Op::SumSquares:
      gin(0).data += 2.0 * g.data[0] * in_val(id, 0).data;
      break;
    case Op::Conv2d: {
      const Tensor& x = in_val(id, 0);
      const Tensor& k = in_val(id, 1);
      Index cin = x.shape[0], h = x.shape[1], w = x.shape[2];
      Index cout = k.shape[0];
      Index hw = h * w, pr = cin * 9;
      const Tensor& patches = scratch_[static_cast<size_t>(id)];
      ConstMapMat gm(g.data.data(), cout, hw);
      ConstMapMat pm(patches.data.data(), pr, hw);
      // kernel and bias
      MapMat gk(gin(1).data.data(), cout, pr);
      gk.noalias() += gm * pm.transpose();
      Eigen::Map<Eigen::VectorXd>(gin(2).data.data(), cout) += gm.rowwise().sum();
      // input via col2im of k^T * g
      ConstMapMat km(k.data.data(), cout, pr);
      MatrixRM t = km.transpose() * gm;  // pr x hw
      Tensor& gx = gin(0);
      for (Index c = 0; c < cin; ++c)
        for (Index ky = 0; ky < 3; ++ky)
          for (Index kx = 0; kx < 3; ++kx) {
            Index dy = ky - 1, dx = kx - 1;
            const double* trow = t.data() + ((c * 3 + ky) * 3 + kx) * hw;
            for (Index i = 0; i < h; ++i) {
              Index si = i + dy;
              if (si < 0 || si >= h) continue;
              Index j0 = std::max<Index>(0, -dx);
              Index j1 = std::min<Index>(w, w - dx);
              double* dst = gx.data.data() + (c * h + si) * w + (j0 + dx);
              const double* src = trow + i * w + j0;
              for (Index j = 0; j < j1 - j0; ++j) dst[j] += src[j];
            }
          }
      break;
    }
    case Op::Upsample2: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], h = x.shape[1], w = x.shape[2];
      Tensor& gx = gin(0);
      for (Index cc = 0; cc < c; ++cc)
        for (Index i = 0; i < h; ++i) {
          const double* s0 = g.data.data() + (cc * 2 * h + 2 * i) * 2 * w;
          const double* s1 = s0 + 2 * w;
          double* dst = gx.data.data() + (cc * h + i) * w;
          for (Index j = 0; j < w; ++j)
            dst[j] += s0[2 * j] + s0[2 * j + 1] + s1[2 * j] + s1[2 * j + 1];
        }
      break;
    }
    case Op::AvgPool2: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], h = x.shape[1], w = x.shape[2];
      Index oh = h / 2, ow = w / 2;
      Tensor& gx = gin(0);
      for (Index cc = 0; cc < c; ++cc)
        for (Index i = 0; i < oh; ++i) {
          const double* src = g.data.data() + (cc * oh + i) * ow;
          double* d0 = gx.data.data() + (cc * h + 2 * i) * w;
          double* d1 = d0 + w;
          for (Index j = 0; j < ow; ++j) {
            double v = 0.25 * src[j];
            d0[2 * j] += v;
            d0[2 * j + 1] += v;
            d1[2 * j] += v;
            d1[2 * j + 1] += v;
          }
        }
      break;
    }
    case Op::ChannelNorm: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      const Tensor& invr = scratch_[static_cast<size_t>(id)];
      Tensor& gx = gin(0);
      for (Index p = 0; p < hw; ++p) {
        double ir = invr.data[p];
        double dot = 0.0;
        for (Index cc = 0; cc < c; ++cc) dot += x.data[cc * hw + p] * g.data[cc * hw + p];
        double k = dot * ir * ir * ir;
        for (Index cc = 0; cc < c; ++cc)
          gx.data[cc * hw + p] += g.data[cc * hw + p] * ir - x.data[cc * hw + p] * k;
      }
      break;
    }
    case Op::InstanceNorm: {
      const Tensor& x = in_val(id, 0);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      const Tensor& stats = scratch_[static_cast<size_t>(id)];
      Tensor& gx = gin(0);
      for (Index cc = 0; cc < c; ++cc) {
        double mu = stats.data[2 * cc], inv = stats.data[2 * cc + 1];
        auto xs = x.data.segment(cc * hw, hw);
        auto gs = g.data.segment(cc * hw, hw);
        Eigen::ArrayXd y = (xs - mu) * inv;
        double gbar = gs.mean();
        double dot = (gs * y).mean();
        gx.data.segment(cc * hw, hw) += inv * (gs - gbar - y * dot);
      }
      break;
    }
    case Op::ChanScaleShift: {
      const Tensor& x = in_val(id, 0);
      const Tensor& s = in_val(id, 1);
      Index c = x.shape[0], hw = x.shape[1] * x.shape[2];
      Tensor& gx = gin(0);
      Tensor& gs = gin(1);
      Tensor& gt = gin(2);
      for (Index cc = 0; cc < c; ++cc) {
        gx.data.segment(cc * hw, hw) += g.data.segment(cc * hw, hw) * s.data[cc];
        gs.data[cc] += (g.data.segment(cc * hw, hw) * x.data.segment(cc * hw, hw)).sum();
        gt.data[cc] += g.data.segment(cc * hw, hw).sum();
      }
      break;
    }
    case Op::RowSelect: {
      Index cols = in_val(id, 0).shape[1];
      gin(0).data.segment(nd.aux * cols, cols) += g.data;
      break;
    }
    case Op::Reshape:
      gin(0).data += g.data;
      break;
    case Op::BceLogits: {
      const Tensor& z = in_val(id, 0);
      const Tensor& y = in_val(id, 1);
      double gn = g.data[0] / static_cast<double>(z.size());
      gin(0).data += gn * (1.0 / (1.0 + (-z.data).exp()) - y.data);
      gin(1).data += gn * (-z.data);
      break;
    }
    case Op::Input:
    case Op::Constant:
      break;
  }
}

const Tensor& Executor::input_grad(const std::string& input_name) {
  int id = g_.input_node(input_name);
  Tensor& gb = grads_[static_cast<size_t>(id)];
  if (gb.shape != g_.shape_of(id) || !needed_[static_cast<size_t>(id)]) {
    // disconnected from the backward target: gradient is zero by contract
    gb = Tensor(g_.shape_of(id));
  }
  return gb;
}

// ---------------------------------------------------------------------------

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

bool GradCheckReport::passed() const { return worst() < tolerance; }

GradCheckReport check_gradients(const Graph& g, const TensorMap& inputs,
                                const std::string& output, const std::vector<std::string>& wrt,
                                double tolerance, double fd_step) {
  if (tolerance <= 0.0) throw Error("check_gradients: tolerance must be positive");
  auto [value, analytic] = g.gradient(inputs, output, wrt);
  (void)value;
  GradCheckReport report;
  report.tolerance = tolerance;
  TensorMap work = inputs;
  Executor ex(g);
  for (auto& [name, t] : work) ex.bind(name, t);
  int out_node = g.output_node(output);
  for (const auto& name : wrt) {
    Tensor& t = work.at(name);
    const Tensor& a = analytic.at(name);
    double max_err = 0.0;
    for (Index i = 0; i < t.size(); ++i) {
      double orig = t.data[i];
      t.data[i] = orig + fd_step;
      ex.forward();
      double fp = ex.value(out_node).value();
      t.data[i] = orig - fd_step;
      ex.forward();
      double fm = ex.value(out_node).value();
      t.data[i] = orig;
      double fd = (fp - fm) / (2.0 * fd_step);
      double ref = a.data[i];
      double err = std::abs(fd - ref) / std::max({1.0, std::abs(fd), std::abs(ref)});
      max_err = std::max(max_err, err);
    }
    report.entries.push_back({name, max_err});
  }
  return report;
}

}  // namespace lfl
