#pragma once

#include "mwpcl/autodiff.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mwpcl::nn {

/// Named dense tensors packed into one flat buffer. Flat index <-> (tensor, offset)
/// is a bijection: tensors occupy disjoint, contiguous, consecutive ranges.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamRef ref;
  };

  ParamRef add(const std::string& name, std::size_t rows, std::size_t cols = 1);
  const ParamRef& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  /// Name and offset within the tensor for a flat index.
  std::pair<const Entry*, std::size_t> locate(std::size_t flat_index) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> values(const ParamRef& ref) const { return std::span<const double>(values_).subspan(ref.offset, ref.size()); }
  std::span<double> values(const ParamRef& ref) { return std::span<double>(values_).subspan(ref.offset, ref.size()); }
  std::size_t size() const { return values_.size(); }

  void init_uniform(double low, double high, std::uint64_t seed);
  bool all_finite() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> values_;
};

}  // namespace mwpcl::nn
