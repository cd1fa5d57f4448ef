#include "mwpcl/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mwpcl::nn {

ParamRef ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  ParamRef ref{values_.size(), rows, cols};
  values_.resize(values_.size() + rows * cols, 0.0);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, ref});
  return ref;
}

const ParamRef& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].ref;
}

std::pair<const ParamStore::Entry*, std::size_t> ParamStore::locate(std::size_t flat_index) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), flat_index,
                             [](std::size_t i, const Entry& e) { return i < e.ref.offset; });
  if (it == entries_.begin() || flat_index >= values_.size()) throw std::out_of_range("flat index out of range");
  --it;
  return {&*it, flat_index - it->ref.offset};
}

void ParamStore::init_uniform(double low, double high, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(low, high);
  for (double& v : values_) v = dist(rng);
}

bool ParamStore::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mwpcl::nn
