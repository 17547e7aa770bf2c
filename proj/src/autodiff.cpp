#include "uau/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "uau/errors.hpp"

namespace uau {

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

void ParameterStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Entry e;
  e.grad = Tensor(init.shape());
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

void ParameterStore::set_trainable_prefixes(const std::vector<std::string>& prefixes) {
  for (auto& [name, e] : entries_) {
    e.trainable = std::any_of(prefixes.begin(), prefixes.end(),
                              [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  }
}

void ParameterStore::set_all_trainable(bool trainable) {
  for (auto& [name, e] : entries_) e.trainable = trainable;
}

void ParameterStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  auto& e = store.entry(name);
  Node n;
  n.op = "parameter";
  n.value = e.value;
  if (e.trainable) {
    n.requires_grad = true;
    n.param_grad = &e.grad;
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape != this) throw Error(std::string(op) + ": input belongs to a different tape");
    n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const auto& n = nodes_[v.index];
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Tape::grad_slot(Var v) {
  auto& n = nodes_[v.index];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to a different tape");
  if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar, got shape " +
                                                shape_to_string(value(loss).shape()));
  grad_slot(loss)[0] += 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    // Backward fns only touch earlier nodes, so `n` stays valid.
    if (n.backward) n.backward(*this, Var{this, static_cast<std::uint32_t>(i)}, n.grad);
    if (n.param_grad) {
      auto& pg = *n.param_grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

GradCheckReport grad_check(ParameterStore& store, const std::function<Var(Tape&)>& loss_fn, double tolerance,
                           double step, double magnitude_floor) {
  GradCheckReport report;
  report.tolerance = tolerance;
  store.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape).value().item();
  };
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    const Tensor analytic = e.grad;
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double orig = e.value[k];
      e.value[k] = orig + step;
      const double up = eval();
      e.value[k] = orig - step;
      const double down = eval();
      e.value[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (std::isnan(rel) || rel > report.max_rel_error) {
        report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_parameter = name;
        report.worst_index = k;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace uau
