#include "ttc/params.hpp"

#include <cmath>

#include "ttc/common.hpp"

namespace ttc {

ad::Tensor& ParamStore::create(const std::string& name, ad::Shape shape) {
  TTC_REQUIRE(!has(name), "parameter '" << name << "' already exists");
  Entry e;
  e.value = ad::Tensor::zeros(shape);
  e.value.requires_grad = true;
  e.m = ad::Tensor::zeros(shape);
  e.v = ad::Tensor::zeros(std::move(shape));
  order_.push_back(name);
  return index_.emplace(name, std::move(e)).first->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  const auto it = index_.find(name);
  TTC_REQUIRE(it != index_.end(), "unknown parameter '" << name << "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  const auto it = index_.find(name);
  TTC_REQUIRE(it != index_.end(), "unknown parameter '" << name << "'");
  return it->second;
}

long long ParamStore::parameter_count() const {
  long long n = 0;
  for (const auto& name : order_) n += entry(name).value.size();
  return n;
}

void init_uniform_fanin(ad::Tensor& t, Rng& rng) {
  if (t.rank() < 2) return;  // bias vectors stay zero
  const double k = 1.0 / std::sqrt(static_cast<double>(t.dim(1)));
  for (double& v : t.values) v = rng.uniform(-k, k);
}

void ParamBinder::inject(const std::string& name, const ad::Tensor& bound) {
  TTC_REQUIRE(bound.on_tape(), "inject: tensor for '" << name << "' is not on a tape");
  TTC_REQUIRE(cache_.find(name) == cache_.end(), "inject: '" << name << "' already bound");
  bound_ids_.emplace(name, bound.node_id);
  cache_.emplace(name, bound);
}

const ad::Tensor& ParamBinder::operator()(const std::string& name) {
  const auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  const bool trainable = trainable_ ? trainable_(name) : true;
  ad::Tensor bound = tape_.leaf(store_.value(name), trainable);
  bound_ids_.emplace(name, bound.node_id);
  return cache_.emplace(name, std::move(bound)).first->second;
}

}  // namespace ttc
