#include "tbd/parameters.hpp"

#include <stdexcept>

namespace tbd {

void ParameterSet::add(std::string name, Grid value) {
  if (index_.contains(name)) throw std::invalid_argument("ParameterSet: duplicate tensor '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParameterSet::contains(const std::string& name) const { return index_.contains(name); }

const Grid& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParameterSet: no tensor '" + name + "'");
  return entries_[it->second].second;
}

Grid& ParameterSet::get(const std::string& name) {
  return const_cast<Grid&>(static_cast<const ParameterSet&>(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, g] : entries_) n += g.size();
  return n;
}

std::map<std::string, ad::Var> ParameterSet::bind(ad::Graph& graph, const std::string& prefix,
                                                  bool trainable) const {
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, g] : entries_) {
    vars[name] = trainable ? graph.parameter(prefix + name, g) : graph.constant(g);
  }
  return vars;
}

void ParameterSet::descend(const std::map<std::string, Grid>& grads, const std::string& prefix,
                           double rate) {
  for (auto& [name, value] : entries_) {
    auto it = grads.find(prefix + name);
    if (it == grads.end()) continue;
    const Grid& g = it->second;
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= rate * g[i];
  }
}

}  // namespace tbd
