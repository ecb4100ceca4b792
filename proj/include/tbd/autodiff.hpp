#pragma once

// Reverse-mode automatic differentiation over dense grids.
//
// A Graph records operations in creation order, which is also a topological
// order. Forward values are computed eagerly when a node is created and can
// be recomputed from the current input bindings with Graph::evaluate().
// Binary element-wise ops accept operands of equal shape or a scalar (1x1x1)
// operand which is broadcast.

#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tbd/grid.hpp"

namespace tbd::ad {

enum class Op : std::uint8_t {
  Input,
  Add,
  Sub,
  Mul,
  Div,
  Abs,
  Tanh,
  Exp,
  Log,
  Softplus,
  Sigmoid,
  Square,
  Clamp,
  Maximum,
  Minimum,
  MaxChannels,
  Sum,
  SumChannels,
  Mean,
  SpatialSoftmax,
  SoftmaxChannels,
  AvgPool,
  GlobalAvgPool,
  Affine,
  SliceChannels,
  ConcatChannels,
};

const char* op_name(Op op);

/// Raised when a forward pass produces NaN; carries the offending node id.
class NumericError : public std::runtime_error {
 public:
  NumericError(int node, const std::string& what)
      : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

class Graph;

/// Lightweight handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Grid& value() const;
  const Shape& shape() const;
  /// Convenience for scalar nodes.
  double item() const { return value().item(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named input. Trainable inputs receive gradients in backpropagate().
  Var input(std::string name, Grid value, bool trainable);
  Var parameter(std::string name, Grid value) {
    return input(std::move(name), std::move(value), true);
  }
  Var constant(Grid value) { return input({}, std::move(value), false); }
  Var constant(double value) { return constant(Grid::scalar(value)); }

  /// Rebinds a named input. The shape must not change.
  void bind(const std::string& name, Grid value);
  void set_input(Var v, Grid value);

  /// Recomputes every node from the current bindings.
  void evaluate();

  /// Adjoints of `output` (must be scalar) w.r.t. every node; returns the
  /// gradient of each named trainable input.
  std::map<std::string, Grid> backpropagate(Var output);

  const Grid& value(Var v) const { return node(v).value; }
  const Grid& adjoint(Var v) const;
  bool is_trainable(Var v) const { return node(v).trainable; }
  bool is_constant(Var v) const {
    return node(v).op == Op::Input && !node(v).trainable;
  }
  Op op(Var v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return evaluated_; }

  /// Ids of trainable input nodes in creation order.
  std::vector<Var> trainable_inputs();
  const std::string& name(Var v) const { return node(v).name; }

  /// Branch choices of every max/min/clamp/abs node in the last forward
  /// pass; used to detect tie flips under perturbation.
  std::vector<std::uint8_t> branch_signature() const;

  // Node construction; prefer the free functions below.
  Var unary(Op op, Var a);
  Var binary(Op op, Var a, Var b);
  Var clamp(Var a, double lo, double hi);
  Var slice_channels(Var a, int begin, int count);
  Var avg_pool(Var a, int window);
  Var affine(Var x, Var weight, Var bias);
  Var concat_channels(std::span<const Var> parts);

 private:
  struct Node {
    Op op = Op::Input;
    std::vector<int> operands;
    double lo = 0.0;
    double hi = 0.0;
    int ia = 0;
    int ib = 0;
    std::string name;
    bool trainable = false;
    Grid value;
    Grid adjoint;
    std::vector<std::uint8_t> branch;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);
  void forward(int id);
  void backward(int id);
  Shape infer_shape(const Node& n) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> names_;
  bool evaluated_ = true;
  bool has_adjoints_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var operator-(Var a);

Var abs(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
/// Element-wise max/min; ties select the first operand.
Var maximum(Var a, Var b);
Var minimum(Var a, Var b);
/// Max over channels, (r,c,k) -> (r,c,1); ties select the lowest channel.
Var max_channels(Var a);
Var sum(Var a);
Var sum_channels(Var a);
Var mean(Var a);
/// Softmax over all spatial cells, independently per channel.
Var spatial_softmax(Var a);
/// Softmax over channels, independently per cell.
Var softmax_channels(Var a);
/// Non-overlapping window x window average pooling.
Var avg_pool(Var a, int window);
/// Average over all cells, (r,c,k) -> (1,1,k).
Var global_avg_pool(Var a);
/// Per-cell affine map: x (r,c,in), weight (out,in,1), bias (1,1,out).
Var affine(Var x, Var weight, Var bias);
Var slice_channels(Var a, int begin, int count);
Var concat_channels(std::initializer_list<Var> parts);
Var concat_channels(std::span<const Var> parts);

}  // namespace tbd::ad
