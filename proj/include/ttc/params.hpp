#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttc/rng.hpp"
#include "ttc/tape.hpp"

namespace ttc {

// All learnable parameters plus Adam moment buffers, iterated in creation
// order so that seeded initialization and checkpoints are deterministic.
class ParamStore {
 public:
  struct Entry {
    ad::Tensor value;
    ad::Tensor m;  // Adam first moment
    ad::Tensor v;  // Adam second moment
  };

  ad::Tensor& create(const std::string& name, ad::Shape shape);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  ad::Tensor& value(const std::string& name) { return entry(name).value; }

  const std::vector<std::string>& names() const { return order_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void bump_step() { ++step_; }

  long long parameter_count() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> index_;
  std::uint64_t step_ = 0;
};

// Matrices get uniform(-k, k) with k = 1/sqrt(fan_in) (fan_in = columns),
// vectors get zeros. LSTM bias vectors additionally get +1 on the forget
// gate, applied by the model after creation.
void init_uniform_fanin(ad::Tensor& t, Rng& rng);

// Binds store parameters onto one tape, caching node ids so that a
// parameter used twice in a graph accumulates into a single gradient slot.
class ParamBinder {
 public:
  using TrainablePred = std::function<bool(const std::string&)>;

  ParamBinder(ad::Tape& tape, ParamStore& store, TrainablePred trainable = nullptr)
      : tape_(tape), store_(store), trainable_(std::move(trainable)) {}

  const ad::Tensor& operator()(const std::string& name);

  // Seeds the cache with an already-bound tensor, e.g. a grad_check probe
  // leaf standing in for the stored parameter.
  void inject(const std::string& name, const ad::Tensor& bound);

  // Names bound during this pass, with their tape node ids.
  const std::unordered_map<std::string, int>& bound() const { return bound_ids_; }

  ad::Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }

 private:
  ad::Tape& tape_;
  ParamStore& store_;
  TrainablePred trainable_;
  std::unordered_map<std::string, ad::Tensor> cache_;
  std::unordered_map<std::string, int> bound_ids_;
};

}  // namespace ttc
