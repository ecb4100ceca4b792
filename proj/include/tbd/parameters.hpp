#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tbd/autodiff.hpp"

namespace tbd {

/// Ordered collection of named parameter tensors.
class ParameterSet {
 public:
  void add(std::string name, Grid value);
  bool contains(const std::string& name) const;
  const Grid& get(const std::string& name) const;
  Grid& get(const std::string& name);
  const std::vector<std::pair<std::string, Grid>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  /// Inserts every tensor into `graph` as a trainable input named prefix + name,
  /// or as unnamed constants when `trainable` is false (frozen networks).
  std::map<std::string, ad::Var> bind(ad::Graph& graph, const std::string& prefix, bool trainable) const;

  /// value -= rate * gradient for every tensor that has a gradient under prefix + name.
  void descend(const std::map<std::string, Grid>& grads, const std::string& prefix, double rate);

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<std::pair<std::string, Grid>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace tbd
