#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wimp/autodiff.hpp"

namespace wimp {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named learned tensors plus Adam moment accumulators. Ids are dense indices
// in registration order and stay stable for the lifetime of the store.
class ParameterStore {
 public:
  int add(const std::string& name, ad::Tensor value);
  int id(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }

  const std::string& name(int id) const { return entries_.at(id).name; }
  const ad::Tensor& value(int id) const { return entries_.at(id).value; }
  ad::Tensor& value(int id) { return entries_.at(id).value; }
  const ad::Tensor& value(const std::string& name) const { return value(id(name)); }
  ad::Tensor& value(const std::string& name) { return value(id(name)); }
  const ad::Tensor& first_moment(int id) const { return entries_.at(id).m; }
  const ad::Tensor& second_moment(int id) const { return entries_.at(id).v; }

  std::uint64_t step() const noexcept { return step_; }
  std::size_t parameter_count() const;

  // Extra tensors saved alongside the weights (model config, mixture ranks).
  // They never receive gradients.
  std::map<std::string, ad::Tensor>& metadata() noexcept { return metadata_; }
  const std::map<std::string, ad::Tensor>& metadata() const noexcept { return metadata_; }

  friend class AdamOptimizer;
  friend void save_checkpoint(const ParameterStore&, std::vector<std::uint8_t>&);
  friend ParameterStore load_checkpoint(std::span<const std::uint8_t>);

  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  struct Entry {
    std::string name;
    ad::Tensor value;
    ad::Tensor m;
    ad::Tensor v;
  };
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  std::map<std::string, ad::Tensor> metadata_;
  std::uint64_t step_ = 0;
};

// Per-parameter gradient sums, shaped like the store.
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParameterStore& store);

  void accumulate(const ad::Tape& tape, double weight = 1.0);
  void add(const GradientBuffer& other);
  void scale(double s);
  void zero();
  double global_norm() const;

  std::vector<double>& at(int id) { return grads_.at(id); }
  const std::vector<double>& at(int id) const { return grads_.at(id); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<std::vector<double>> grads_;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  // Scales the whole gradient down to `clip_norm` when its global L2 norm
  // exceeds it, then applies one Adam update. Returns the pre-clip norm.
  double step(ParameterStore& store, GradientBuffer& grads, double lr, double clip_norm) const;

  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
};

// Binary checkpoint: "WIMPCKPT", u32 version, then sections of records
// (u32 name length, UTF-8 name, u32 rank, u64 dims, f64 LE payload). Sections:
// parameters, optimizer state (<name>/adam_m, <name>/adam_v, adam/step),
// metadata.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParameterStore& store, std::vector<std::uint8_t>& out);
ParameterStore load_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint_file(const ParameterStore& store, const std::filesystem::path& path);
ParameterStore load_checkpoint_file(const std::filesystem::path& path);

// Deterministic uniform(-bound, bound) fill driven by a 64-bit Mersenne
// twister (the bit-to-double conversion is explicit so results do not depend
// on the standard library's distribution implementation).
void fill_uniform(ad::Tensor& t, double bound, std::mt19937_64& rng);
double uniform01(std::mt19937_64& rng);

}  // namespace wimp
