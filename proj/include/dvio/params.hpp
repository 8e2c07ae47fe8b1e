#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvio/tensor.hpp"

namespace dvio::nn {

/// A named, trainable tensor. `grad` is the slot the training loop fills
/// from the graph leaves before each optimizer step.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters; iteration order is creation order, which fixes the
/// optimizer update order and hence bit-exact reproducibility.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  size_t size() const { return params_.size(); }
  int total_values() const;

  void zero_all_grads();

  /// Binary checkpoint: magic, version, count, then per-parameter records
  /// (u32 name length, name bytes, u32 rank, u32 extents..., f64 data
  /// little-endian). A text manifest with one `name shape` line per
  /// parameter plus caller-provided extra lines is written alongside as
  /// `<path>.manifest`.
  void save(const std::string& path, const std::vector<std::string>& manifest_extra = {}) const;

  /// Replaces the store contents with the checkpoint contents.
  void load(const std::string& path);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

}  // namespace dvio::nn
