#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ctnav/nn/tensor.hpp"
#include "ctnav/rng.hpp"

namespace ctnav::nn {

// Named parameters with a stable registration order. Gradients live alongside
// the values; the training loop copies tape gradients in after each backward.
template <typename T>
class ParamStoreT {
public:
    struct Entry {
        std::string name;
        TensorT<T> value;
        TensorT<T> grad;
    };

    TensorT<T>& add(const std::string& name, TensorT<T> value) {
        if (index_.count(name)) throw RuntimeFailure("param already registered: " + name);
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, std::move(value), {}});
        Entry& e = entries_.back();
        e.grad = TensorT<T>(e.value.shape);
        return e.value;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw RuntimeFailure("unknown param: " + name);
        return entries_[it->second];
    }
    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw RuntimeFailure("unknown param: " + name);
        return entries_[it->second];
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    void zero_grads() {
        for (Entry& e : entries_) e.grad.fill(T(0));
        has_fresh_grads_ = false;
    }

    void mark_grads_fresh() { has_fresh_grads_ = true; }
    bool has_fresh_grads() const { return has_fresh_grads_; }
    void consume_grads() { has_fresh_grads_ = false; }

    std::int64_t total_parameters() const {
        std::int64_t n = 0;
        for (const Entry& e : entries_) n += e.value.numel();
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    bool has_fresh_grads_ = false;
};

using ParamStore = ParamStoreT<float>;

template <typename To, typename From>
ParamStoreT<To> cast_params(const ParamStoreT<From>& src) {
    ParamStoreT<To> out;
    for (const auto& e : src.entries()) out.add(e.name, cast_tensor<To>(e.value));
    return out;
}

// init helpers -------------------------------------------------------------

template <typename T>
TensorT<T> gaussian_tensor(std::vector<int> shape, Rng& rng, double stddev) {
    TensorT<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.normal() * stddev);
    return t;
}

template <typename T>
TensorT<T> const_tensor(std::vector<int> shape, T value) {
    TensorT<T> t(std::move(shape));
    t.fill(value);
    return t;
}

// Adam with decoupled weight decay and linear warmup. Decay applies to
// matrix-shaped weights only (names ending in ".w"); biases, gains and
// embedding tables are left undecayed.
template <typename T>
class AdamWT {
public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long warmup_steps = 1;
    long step_count = 0;

    double effective_lr(long step) const {
        const double ramp =
            warmup_steps > 0 ? std::min(1.0, static_cast<double>(step) / warmup_steps) : 1.0;
        return lr * ramp;
    }

    void step(ParamStoreT<T>& params) {
        if (!params.has_fresh_grads())
            throw RuntimeFailure("optimizer step before backward: gradients are stale");
        ++step_count;
        const double eff = effective_lr(step_count);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (auto& e : params.entries()) {
            TensorT<T>& m = moment(m_, e.name, e.value.shape);
            TensorT<T>& v = moment(v_, e.name, e.value.shape);
            const bool decay = e.name.size() > 2 && e.name.rfind(".w") == e.name.size() - 2;
            const std::int64_t count = e.value.numel();
#pragma omp parallel for schedule(static) if (count >= (1 << 15))
            for (std::int64_t i = 0; i < count; ++i) {
                const double g = static_cast<double>(e.grad.data[static_cast<std::size_t>(i)]);
                const double mi =
                    beta1 * m.data[static_cast<std::size_t>(i)] + (1.0 - beta1) * g;
                const double vi =
                    beta2 * v.data[static_cast<std::size_t>(i)] + (1.0 - beta2) * g * g;
                m.data[static_cast<std::size_t>(i)] = static_cast<T>(mi);
                v.data[static_cast<std::size_t>(i)] = static_cast<T>(vi);
                double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps);
                if (decay)
                    update +=
                        weight_decay * static_cast<double>(e.value.data[static_cast<std::size_t>(i)]);
                e.value.data[static_cast<std::size_t>(i)] -= static_cast<T>(eff * update);
            }
        }
        params.consume_grads();
    }

    // moment buffers in parameter order, for persistence
    std::vector<std::pair<std::string, const TensorT<T>*>> state(
        const ParamStoreT<T>& params) const {
        std::vector<std::pair<std::string, const TensorT<T>*>> out;
        for (const auto& e : params.entries()) {
            auto mi = m_.find(e.name);
            auto vi = v_.find(e.name);
            if (mi != m_.end()) out.emplace_back(e.name + ".m", &mi->second);
            if (vi != v_.end()) out.emplace_back(e.name + ".v", &vi->second);
        }
        return out;
    }

    void load_moment(const std::string& key, TensorT<T> t) {
        if (key.size() > 2 && key.rfind(".m") == key.size() - 2)
            m_[key.substr(0, key.size() - 2)] = std::move(t);
        else if (key.size() > 2 && key.rfind(".v") == key.size() - 2)
            v_[key.substr(0, key.size() - 2)] = std::move(t);
        else
            throw RuntimeFailure("unknown optimizer state key: " + key);
    }

private:
    TensorT<T>& moment(std::unordered_map<std::string, TensorT<T>>& store,
                       const std::string& name, const std::vector<int>& shape) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, TensorT<T>(shape)).first;
        if (it->second.shape != shape)
            throw RuntimeFailure("optimizer moment shape mismatch for " + name);
        return it->second;
    }

    std::unordered_map<std::string, TensorT<T>> m_;
    std::unordered_map<std::string, TensorT<T>> v_;
};

using AdamW = AdamWT<float>;

}  // namespace ctnav::nn
