#include "tbd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tbd::ad {

namespace {

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_binary(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Maximum:
    case Op::Minimum:
      return true;
    default:
      return false;
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Abs: return "abs";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Square: return "square";
    case Op::Clamp: return "clamp";
    case Op::Maximum: return "maximum";
    case Op::Minimum: return "minimum";
    case Op::MaxChannels: return "max-channels";
    case Op::Sum: return "sum";
    case Op::SumChannels: return "sum-channels";
    case Op::Mean: return "mean";
    case Op::SpatialSoftmax: return "spatial-softmax";
    case Op::SoftmaxChannels: return "softmax-channels";
    case Op::AvgPool: return "avg-pool";
    case Op::GlobalAvgPool: return "global-avg-pool";
    case Op::Affine: return "affine";
    case Op::SliceChannels: return "slice-channels";
    case Op::ConcatChannels: return "concat-channels";
  }
  return "?";
}

const Grid& Var::value() const { return graph->value(*this); }
const Shape& Var::shape() const { return graph->value(*this).shape(); }

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Var does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Graph::Node& Graph::node(Var v) {
  return const_cast<Node&>(static_cast<const Graph&>(*this).node(v));
}

Var Graph::input(std::string name, Grid value, bool trainable) {
  if (value.empty()) throw std::invalid_argument("Graph::input: empty grid");
  if (trainable && name.empty()) {
    throw std::invalid_argument("Graph::input: trainable inputs need a name");
  }
  if (!name.empty() && names_.contains(name)) {
    throw std::invalid_argument("Graph::input: duplicate input name '" + name + "'");
  }
  Node n;
  n.op = Op::Input;
  n.name = std::move(name);
  n.trainable = trainable;
  n.value = std::move(value);
  const int id = static_cast<int>(nodes_.size());
  if (!n.name.empty()) names_[n.name] = id;
  nodes_.push_back(std::move(n));
  has_adjoints_ = false;
  return Var{this, id};
}

void Graph::bind(const std::string& name, Grid value) {
  auto it = names_.find(name);
  if (it == names_.end()) throw std::invalid_argument("Graph::bind: unbound input '" + name + "'");
  set_input(Var{this, it->second}, std::move(value));
}

void Graph::set_input(Var v, Grid value) {
  Node& n = node(v);
  if (n.op != Op::Input) throw std::invalid_argument("Graph::set_input: not an input node");
  if (!(n.value.shape() == value.shape())) {
    throw std::invalid_argument("Graph::set_input: shape mismatch for '" + n.name + "': expected " +
                                n.value.shape().str() + ", got " + value.shape().str());
  }
  n.value = std::move(value);
  evaluated_ = false;
  has_adjoints_ = false;
}

std::vector<Var> Graph::trainable_inputs() {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::Input && nodes_[i].trainable) out.push_back(Var{this, static_cast<int>(i)});
  }
  return out;
}

std::vector<std::uint8_t> Graph::branch_signature() const {
  std::vector<std::uint8_t> sig;
  for (const Node& n : nodes_) sig.insert(sig.end(), n.branch.begin(), n.branch.end());
  return sig;
}

Shape Graph::infer_shape(const Node& n) const {
  auto shape_of = [&](int i) { return nodes_[static_cast<std::size_t>(i)].value.shape(); };
  if (is_binary(n.op)) {
    const Shape a = shape_of(n.operands[0]);
    const Shape b = shape_of(n.operands[1]);
    if (a == b || b.is_scalar()) return a;
    if (a.is_scalar()) return b;
    throw std::invalid_argument(std::string("shape mismatch in ") + op_name(n.op) + ": " +
                                a.str() + " vs " + b.str());
  }
  const Shape a = shape_of(n.operands[0]);
  switch (n.op) {
    case Op::MaxChannels:
    case Op::SumChannels:
      return {a.rows, a.cols, 1};
    case Op::Sum:
    case Op::Mean:
      return {1, 1, 1};
    case Op::AvgPool:
      if (n.ia <= 0 || a.rows % n.ia != 0 || a.cols % n.ia != 0) {
        throw std::invalid_argument("avg-pool: window " + std::to_string(n.ia) +
                                    " does not tile " + a.str());
      }
      return {a.rows / n.ia, a.cols / n.ia, a.channels};
    case Op::GlobalAvgPool:
      return {1, 1, a.channels};
    case Op::Affine: {
      const Shape w = shape_of(n.operands[1]);
      const Shape b = shape_of(n.operands[2]);
      if (w.channels != 1 || w.cols != a.channels) {
        throw std::invalid_argument("affine: weight " + w.str() + " incompatible with input " +
                                    a.str());
      }
      if (!(b == Shape{1, 1, w.rows})) {
        throw std::invalid_argument("affine: bias " + b.str() + " incompatible with weight " +
                                    w.str());
      }
      return {a.rows, a.cols, w.rows};
    }
    case Op::SliceChannels:
      if (n.ia < 0 || n.ib <= 0 || n.ia + n.ib > a.channels) {
        throw std::invalid_argument("slice-channels: range out of bounds for " + a.str());
      }
      return {a.rows, a.cols, n.ib};
    case Op::ConcatChannels: {
      int channels = 0;
      for (int id : n.operands) {
        const Shape s = shape_of(id);
        if (s.rows != a.rows || s.cols != a.cols) {
          throw std::invalid_argument("concat-channels: spatial mismatch " + a.str() + " vs " +
                                      s.str());
        }
        channels += s.channels;
      }
      return {a.rows, a.cols, channels};
    }
    default:
      return a;
  }
}

Var Graph::push(Node n) {
  for (int id : n.operands) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("operand from another graph");
    }
  }
  if (!evaluated_) evaluate();
  n.value = Grid(infer_shape(n));
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  has_adjoints_ = false;
  try {
    forward(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{this, id};
}

Var Graph::unary(Op op, Var a) {
  Node n;
  n.op = op;
  node(a);
  n.operands = {a.id};
  return push(std::move(n));
}

Var Graph::binary(Op op, Var a, Var b) {
  node(a);
  node(b);
  Node n;
  n.op = op;
  n.operands = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
  node(a);
  if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be below hi");
  Node n;
  n.op = Op::Clamp;
  n.operands = {a.id};
  n.lo = lo;
  n.hi = hi;
  return push(std::move(n));
}

Var Graph::slice_channels(Var a, int begin, int count) {
  node(a);
  Node n;
  n.op = Op::SliceChannels;
  n.operands = {a.id};
  n.ia = begin;
  n.ib = count;
  return push(std::move(n));
}

Var Graph::avg_pool(Var a, int window) {
  node(a);
  Node n;
  n.op = Op::AvgPool;
  n.operands = {a.id};
  n.ia = window;
  return push(std::move(n));
}

Var Graph::affine(Var x, Var weight, Var bias) {
  node(x);
  node(weight);
  node(bias);
  Node n;
  n.op = Op::Affine;
  n.operands = {x.id, weight.id, bias.id};
  return push(std::move(n));
}

Var Graph::concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat-channels: no operands");
  Node n;
  n.op = Op::ConcatChannels;
  for (Var p : parts) {
    node(p);
    n.operands.push_back(p.id);
  }
  return push(std::move(n));
}

void Graph::evaluate() {
  evaluated_ = true;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::Input) forward(static_cast<int>(i));
  }
  has_adjoints_ = false;
}

void Graph::forward(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  Grid& out = n.value;
  const Grid& a = nodes_[static_cast<std::size_t>(n.operands[0])].value;
  const std::size_t size = out.size();

  if (is_binary(n.op)) {
    const Grid& b = nodes_[static_cast<std::size_t>(n.operands[1])].value;
    const bool sa = a.size() == 1 && size != 1;
    const bool sb = b.size() == 1 && size != 1;
    const bool branching = n.op == Op::Maximum || n.op == Op::Minimum;
    if (branching) n.branch.assign(size, 0);
    for (std::size_t i = 0; i < size; ++i) {
      const double x = a[sa ? 0 : i];
      const double y = b[sb ? 0 : i];
      switch (n.op) {
        case Op::Add: out[i] = x + y; break;
        case Op::Sub: out[i] = x - y; break;
        case Op::Mul: out[i] = x * y; break;
        case Op::Div: out[i] = x / y; break;
        case Op::Maximum:
          n.branch[i] = x >= y ? 0 : 1;
          out[i] = x >= y ? x : y;
          break;
        case Op::Minimum:
          n.branch[i] = x <= y ? 0 : 1;
          out[i] = x <= y ? x : y;
          break;
        default: break;
      }
    }
  } else {
    const Shape& as = a.shape();
    switch (n.op) {
      case Op::Abs:
        n.branch.assign(size, 0);
        for (std::size_t i = 0; i < size; ++i) {
          n.branch[i] = a[i] > 0.0 ? 1 : (a[i] < 0.0 ? 2 : 0);
          out[i] = std::fabs(a[i]);
        }
        break;
      case Op::Tanh:
        for (std::size_t i = 0; i < size; ++i) out[i] = std::tanh(a[i]);
        break;
      case Op::Exp:
        for (std::size_t i = 0; i < size; ++i) out[i] = std::exp(a[i]);
        break;
      case Op::Log:
        for (std::size_t i = 0; i < size; ++i) out[i] = std::log(a[i]);
        break;
      case Op::Softplus:
        for (std::size_t i = 0; i < size; ++i) out[i] = stable_softplus(a[i]);
        break;
      case Op::Sigmoid:
        for (std::size_t i = 0; i < size; ++i) out[i] = stable_sigmoid(a[i]);
        break;
      case Op::Square:
        for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * a[i];
        break;
      case Op::Clamp:
        n.branch.assign(size, 0);
        for (std::size_t i = 0; i < size; ++i) {
          if (a[i] <= n.lo) {
            n.branch[i] = 1;
            out[i] = n.lo;
          } else if (a[i] >= n.hi) {
            n.branch[i] = 2;
            out[i] = n.hi;
          } else {
            out[i] = a[i];
          }
        }
        break;
      case Op::MaxChannels: {
        if (as.channels > 255) throw std::invalid_argument("max-channels: too many channels");
        n.branch.assign(size, 0);
        for (std::size_t c = 0; c < size; ++c) {
          const std::size_t base = c * static_cast<std::size_t>(as.channels);
          int best = 0;
          for (int k = 1; k < as.channels; ++k) {
            if (a[base + static_cast<std::size_t>(k)] > a[base + static_cast<std::size_t>(best)]) best = k;
          }
          n.branch[c] = static_cast<std::uint8_t>(best);
          out[c] = a[base + static_cast<std::size_t>(best)];
        }
        break;
      }
      case Op::Sum:
        out[0] = a.sum();
        break;
      case Op::Mean:
        out[0] = a.sum() / static_cast<double>(a.size());
        break;
      case Op::SumChannels:
        for (std::size_t c = 0; c < size; ++c) {
          double s = 0.0;
          for (int k = 0; k < as.channels; ++k) s += a[c * static_cast<std::size_t>(as.channels) + static_cast<std::size_t>(k)];
          out[c] = s;
        }
        break;
      case Op::SpatialSoftmax: {
        const std::size_t cells = as.cells();
        const auto ch = static_cast<std::size_t>(as.channels);
        for (std::size_t k = 0; k < ch; ++k) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < cells; ++c) m = std::max(m, a[c * ch + k]);
          double z = 0.0;
          for (std::size_t c = 0; c < cells; ++c) {
            out[c * ch + k] = std::exp(a[c * ch + k] - m);
            z += out[c * ch + k];
          }
          for (std::size_t c = 0; c < cells; ++c) out[c * ch + k] /= z;
        }
        break;
      }
      case Op::SoftmaxChannels: {
        const std::size_t cells = as.cells();
        const auto ch = static_cast<std::size_t>(as.channels);
        for (std::size_t c = 0; c < cells; ++c) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < ch; ++k) m = std::max(m, a[c * ch + k]);
          double z = 0.0;
          for (std::size_t k = 0; k < ch; ++k) {
            out[c * ch + k] = std::exp(a[c * ch + k] - m);
            z += out[c * ch + k];
          }
          for (std::size_t k = 0; k < ch; ++k) out[c * ch + k] /= z;
        }
        break;
      }
      case Op::AvgPool: {
        const int w = n.ia;
        const double inv = 1.0 / (w * w);
        out.fill(0.0);
        for (int r = 0; r < as.rows; ++r) {
          for (int c = 0; c < as.cols; ++c) {
            for (int k = 0; k < as.channels; ++k) out(r / w, c / w, k) += a(r, c, k) * inv;
          }
        }
        break;
      }
      case Op::GlobalAvgPool: {
        const std::size_t cells = as.cells();
        const auto ch = static_cast<std::size_t>(as.channels);
        for (std::size_t k = 0; k < ch; ++k) {
          double s = 0.0;
          for (std::size_t c = 0; c < cells; ++c) s += a[c * ch + k];
          out[k] = s / static_cast<double>(cells);
        }
        break;
      }
      case Op::Affine: {
        const Grid& w = nodes_[static_cast<std::size_t>(n.operands[1])].value;
        const Grid& b = nodes_[static_cast<std::size_t>(n.operands[2])].value;
        const auto in = static_cast<std::size_t>(w.cols());
        const auto outc = static_cast<std::size_t>(w.rows());
        const std::size_t cells = as.cells();
        for (std::size_t c = 0; c < cells; ++c) {
          const double* x = a.values().data() + c * in;
          double* y = &out[c * outc];
          for (std::size_t o = 0; o < outc; ++o) {
            const double* wr = w.values().data() + o * in;
            double s = b[o];
            for (std::size_t i = 0; i < in; ++i) s += wr[i] * x[i];
            y[o] = s;
          }
        }
        break;
      }
      case Op::SliceChannels: {
        const std::size_t cells = as.cells();
        const auto ch = static_cast<std::size_t>(as.channels);
        const auto cnt = static_cast<std::size_t>(n.ib);
        for (std::size_t c = 0; c < cells; ++c) {
          for (std::size_t k = 0; k < cnt; ++k) out[c * cnt + k] = a[c * ch + static_cast<std::size_t>(n.ia) + k];
        }
        break;
      }
      case Op::ConcatChannels: {
        const std::size_t cells = as.cells();
        const auto total = static_cast<std::size_t>(out.channels());
        std::size_t offset = 0;
        for (int id_part : n.operands) {
          const Grid& p = nodes_[static_cast<std::size_t>(id_part)].value;
          const auto ch = static_cast<std::size_t>(p.channels());
          for (std::size_t c = 0; c < cells; ++c) {
            for (std::size_t k = 0; k < ch; ++k) out[c * total + offset + k] = p[c * ch + k];
          }
          offset += ch;
        }
        break;
      }
      default:
        break;
    }
  }

  for (std::size_t i = 0; i < size; ++i) {
    if (std::isnan(out[i])) {
      throw NumericError(id, std::string("NaN produced by node ") + std::to_string(id) + " (" +
                                 op_name(n.op) + ")");
    }
  }
}

const Grid& Graph::adjoint(Var v) const {
  if (!has_adjoints_) throw std::logic_error("Graph::adjoint: backpropagate has not run");
  return node(v).adjoint;
}

std::map<std::string, Grid> Graph::backpropagate(Var output) {
  if (!evaluated_) throw std::logic_error("Graph::backpropagate called before evaluate");
  const Node& out_node = node(output);
  if (!out_node.value.shape().is_scalar()) {
    throw std::invalid_argument("Graph::backpropagate: output is not scalar");
  }

  // Only nodes that lead to a trainable input need adjoints.
  std::vector<bool> needs(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Input) {
      needs[i] = n.trainable;
    } else {
      for (int id : n.operands) needs[i] = needs[i] || needs[static_cast<std::size_t>(id)];
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].adjoint = Grid(nodes_[i].value.shape());
  nodes_[static_cast<std::size_t>(output.id)].adjoint[0] = 1.0;

  for (int id = output.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Input || !needs[static_cast<std::size_t>(id)]) continue;
    backward(id);
  }
  has_adjoints_ = true;

  std::map<std::string, Grid> grads;
  for (const Node& n : nodes_) {
    if (n.op == Op::Input && n.trainable) grads[n.name] = n.adjoint;
  }
  return grads;
}

void Graph::backward(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Grid& g = n.adjoint;
  const Grid& y = n.value;
  Node& na = nodes_[static_cast<std::size_t>(n.operands[0])];
  const Grid& a = na.value;
  Grid& da = na.adjoint;
  const std::size_t size = y.size();

  if (is_binary(n.op)) {
    Node& nb = nodes_[static_cast<std::size_t>(n.operands[1])];
    const Grid& b = nb.value;
    Grid& db = nb.adjoint;
    const bool sa = a.size() == 1 && size != 1;
    const bool sb = b.size() == 1 && size != 1;
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t ia = sa ? 0 : i;
      const std::size_t ib = sb ? 0 : i;
      const double gi = g[i];
      switch (n.op) {
        case Op::Add:
          da[ia] += gi;
          db[ib] += gi;
          break;
        case Op::Sub:
          da[ia] += gi;
          db[ib] -= gi;
          break;
        case Op::Mul:
          da[ia] += gi * b[ib];
          db[ib] += gi * a[ia];
          break;
        case Op::Div:
          da[ia] += gi / b[ib];
          db[ib] -= gi * a[ia] / (b[ib] * b[ib]);
          break;
        case Op::Maximum:
        case Op::Minimum:
          if (n.branch[i] == 0) {
            da[ia] += gi;
          } else {
            db[ib] += gi;
          }
          break;
        default:
          break;
      }
    }
    return;
  }

  const Shape& as = a.shape();
  switch (n.op) {
    case Op::Abs:
      for (std::size_t i = 0; i < size; ++i) {
        if (n.branch[i] == 1) da[i] += g[i];
        if (n.branch[i] == 2) da[i] -= g[i];
      }
      break;
    case Op::Tanh:
      for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    case Op::Exp:
      for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * y[i];
      break;
    case Op::Log:
      for (std::size_t i = 0; i < size; ++i) da[i] += g[i] / a[i];
      break;
    case Op::Softplus:
      for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * stable_sigmoid(a[i]);
      break;
    case Op::Sigmoid:
      for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    case Op::Square:
      for (std::size_t i = 0; i < size; ++i) da[i] += 2.0 * g[i] * a[i];
      break;
    case Op::Clamp:
      for (std::size_t i = 0; i < size; ++i) {
        if (n.branch[i] == 0) da[i] += g[i];
      }
      break;
    case Op::MaxChannels: {
      const auto ch = static_cast<std::size_t>(as.channels);
      for (std::size_t c = 0; c < size; ++c) da[c * ch + n.branch[c]] += g[c];
      break;
    }
    case Op::Sum:
      for (std::size_t i = 0; i < a.size(); ++i) da[i] += g[0];
      break;
    case Op::Mean: {
      const double s = g[0] / static_cast<double>(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) da[i] += s;
      break;
    }
    case Op::SumChannels: {
      const auto ch = static_cast<std::size_t>(as.channels);
      for (std::size_t c = 0; c < size; ++c) {
        for (std::size_t k = 0; k < ch; ++k) da[c * ch + k] += g[c];
      }
      break;
    }
    case Op::SpatialSoftmax: {
      const std::size_t cells = as.cells();
      const auto ch = static_cast<std::size_t>(as.channels);
      for (std::size_t k = 0; k < ch; ++k) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cells; ++c) dot += y[c * ch + k] * g[c * ch + k];
        for (std::size_t c = 0; c < cells; ++c) da[c * ch + k] += y[c * ch + k] * (g[c * ch + k] - dot);
      }
      break;
    }
    case Op::SoftmaxChannels: {
      const std::size_t cells = as.cells();
      const auto ch = static_cast<std::size_t>(as.channels);
      for (std::size_t c = 0; c < cells; ++c) {
        double dot = 0.0;
        for (std::size_t k = 0; k < ch; ++k) dot += y[c * ch + k] * g[c * ch + k];
        for (std::size_t k = 0; k < ch; ++k) da[c * ch + k] += y[c * ch + k] * (g[c * ch + k] - dot);
      }
      break;
    }
    case Op::AvgPool: {
      const int w = n.ia;
      const double inv = 1.0 / (w * w);
      for (int r = 0; r < as.rows; ++r) {
        for (int c = 0; c < as.cols; ++c) {
          for (int k = 0; k < as.channels; ++k) da(r, c, k) += g(r / w, c / w, k) * inv;
        }
      }
      break;
    }
    case Op::GlobalAvgPool: {
      const std::size_t cells = as.cells();
      const auto ch = static_cast<std::size_t>(as.channels);
      const double inv = 1.0 / static_cast<double>(cells);
      for (std::size_t c = 0; c < cells; ++c) {
        for (std::size_t k = 0; k < ch; ++k) da[c * ch + k] += g[k] * inv;
      }
      break;
    }
    case Op::Affine: {
      Node& nw = nodes_[static_cast<std::size_t>(n.operands[1])];
      Node& nbias = nodes_[static_cast<std::size_t>(n.operands[2])];
      const Grid& w = nw.value;
      Grid& dw = nw.adjoint;
      Grid& dbias = nbias.adjoint;
      const auto in = static_cast<std::size_t>(w.cols());
      const auto outc = static_cast<std::size_t>(w.rows());
      const std::size_t cells = as.cells();
      for (std::size_t c = 0; c < cells; ++c) {
        const double* x = a.values().data() + c * in;
        const double* gy = g.values().data() + c * outc;
        double* dx = &da[c * in];
        for (std::size_t o = 0; o < outc; ++o) {
          const double go = gy[o];
          if (go == 0.0) continue;
          const double* wr = w.values().data() + o * in;
          double* dwr = &dw[o * in];
          for (std::size_t i = 0; i < in; ++i) {
            dx[i] += go * wr[i];
            dwr[i] += go * x[i];
          }
          dbias[o] += go;
        }
      }
      break;
    }
    case Op::SliceChannels: {
      const std::size_t cells = as.cells();
      const auto ch = static_cast<std::size_t>(as.channels);
      const auto cnt = static_cast<std::size_t>(n.ib);
      for (std::size_t c = 0; c < cells; ++c) {
        for (std::size_t k = 0; k < cnt; ++k) da[c * ch + static_cast<std::size_t>(n.ia) + k] += g[c * cnt + k];
      }
      break;
    }
    case Op::ConcatChannels: {
      const std::size_t cells = as.cells();
      const auto total = static_cast<std::size_t>(y.channels());
      std::size_t offset = 0;
      for (int id_part : n.operands) {
        Node& p = nodes_[static_cast<std::size_t>(id_part)];
        const auto ch = static_cast<std::size_t>(p.value.channels());
        for (std::size_t c = 0; c < cells; ++c) {
          for (std::size_t k = 0; k < ch; ++k) p.adjoint[c * ch + k] += g[c * total + offset + k];
        }
        offset += ch;
      }
      break;
    }
    default:
      break;
  }
}

// Free-function front end.

namespace {
Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("invalid Var");
  return *a.graph;
}
Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
  return graph_of(a);
}
}  // namespace

Var operator+(Var a, Var b) { return graph_of(a, b).binary(Op::Add, a, b); }
Var operator-(Var a, Var b) { return graph_of(a, b).binary(Op::Sub, a, b); }
Var operator*(Var a, Var b) { return graph_of(a, b).binary(Op::Mul, a, b); }
Var operator/(Var a, Var b) { return graph_of(a, b).binary(Op::Div, a, b); }
Var operator+(Var a, double b) { return a + graph_of(a).constant(b); }
Var operator+(double a, Var b) { return graph_of(b).constant(a) + b; }
Var operator-(Var a, double b) { return a - graph_of(a).constant(b); }
Var operator-(double a, Var b) { return graph_of(b).constant(a) - b; }
Var operator*(Var a, double b) { return a * graph_of(a).constant(b); }
Var operator*(double a, Var b) { return graph_of(b).constant(a) * b; }
Var operator/(Var a, double b) { return a / graph_of(a).constant(b); }
Var operator/(double a, Var b) { return graph_of(b).constant(a) / b; }
Var operator-(Var a) { return 0.0 - a; }

Var abs(Var a) { return graph_of(a).unary(Op::Abs, a); }
Var tanh(Var a) { return graph_of(a).unary(Op::Tanh, a); }
Var exp(Var a) { return graph_of(a).unary(Op::Exp, a); }
Var log(Var a) { return graph_of(a).unary(Op::Log, a); }
Var softplus(Var a) { return graph_of(a).unary(Op::Softplus, a); }
Var sigmoid(Var a) { return graph_of(a).unary(Op::Sigmoid, a); }
Var square(Var a) { return graph_of(a).unary(Op::Square, a); }
Var clamp(Var a, double lo, double hi) { return graph_of(a).clamp(a, lo, hi); }
Var maximum(Var a, Var b) { return graph_of(a, b).binary(Op::Maximum, a, b); }
Var minimum(Var a, Var b) { return graph_of(a, b).binary(Op::Minimum, a, b); }
Var max_channels(Var a) { return graph_of(a).unary(Op::MaxChannels, a); }
Var sum(Var a) { return graph_of(a).unary(Op::Sum, a); }
Var sum_channels(Var a) { return graph_of(a).unary(Op::SumChannels, a); }
Var mean(Var a) { return graph_of(a).unary(Op::Mean, a); }
Var spatial_softmax(Var a) { return graph_of(a).unary(Op::SpatialSoftmax, a); }
Var softmax_channels(Var a) { return graph_of(a).unary(Op::SoftmaxChannels, a); }
Var avg_pool(Var a, int window) { return graph_of(a).avg_pool(a, window); }
Var global_avg_pool(Var a) { return graph_of(a).unary(Op::GlobalAvgPool, a); }
Var affine(Var x, Var weight, Var bias) {
  graph_of(x, weight);
  return graph_of(x, bias).affine(x, weight, bias);
}
Var slice_channels(Var a, int begin, int count) {
  return graph_of(a).slice_channels(a, begin, count);
}
Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}
Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat-channels: no operands");
  for (Var p : parts) graph_of(parts.front(), p);
  return graph_of(parts.front()).concat_channels(parts);
}

}  // namespace tbd::ad
