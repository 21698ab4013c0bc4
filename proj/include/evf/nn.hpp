#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evf/error.hpp"

namespace evf::nn {

/// Dense row-major tensor with an optional gradient buffer. Rank 1 is treated
/// as a single row by the 2-D operations.
template <typename T>
struct TensorT {
    std::vector<size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;

    size_t size() const { return value.size(); }
    size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    size_t cols() const { return shape.empty() ? 0 : shape.back(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    void zero_grad() { grad.assign(value.size(), T(0)); }
};

template <typename T>
using TensorPtr = std::shared_ptr<TensorT<T>>;

inline size_t shape_count(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<size_t> shape, bool requires_grad = false) {
    auto t = std::make_shared<TensorT<T>>();
    t->value.assign(shape_count(shape), T(0));
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<size_t> shape, std::vector<T> values,
                         bool requires_grad = false) {
    if (values.size() != shape_count(shape))
        throw Error(Errc::shape_mismatch, "tensor value count does not match its shape");
    auto t = std::make_shared<TensorT<T>>();
    t->shape = std::move(shape);
    t->value = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

/// Reverse-mode tape. Operations append their backward closures in forward
/// order; backward() replays them in reverse, accumulating into grad buffers.
/// Accumulation order is fixed, so gradients are bitwise reproducible.
template <typename T>
class Tape {
  public:
    void record(std::function<void()> fn) {
        if (recording_) ops_.push_back(std::move(fn));
    }
    void backward(const TensorPtr<T>& loss) {
        if (loss->size() != 1)
            throw Error(Errc::shape_mismatch, "backward expects a scalar loss");
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (size_t i = ops_.size(); i-- > 0;) ops_[i]();
        ops_.clear();
    }
    void clear() { ops_.clear(); }
    size_t recorded() const { return ops_.size(); }
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

  private:
    std::vector<std::function<void()>> ops_;
    bool recording_ = true;
};

// Accumulating matrix kernels. All are written as row-axpy loops (no inner
// reductions) so the compiler vectorizes them without fast-math.

/// c (m x n) += a (m x k) . b (k x n)
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
    size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + i * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (size_t l = 0; l < k; ++l) {
            const T s0 = a0[l], s1 = a1[l], s2 = a2[l], s3 = a3[l];
            const T* br = b + l * n;
            for (size_t j = 0; j < n; ++j) {
                c0[j] += s0 * br[j];
                c1[j] += s1 * br[j];
                c2[j] += s2 * br[j];
                c3[j] += s3 * br[j];
            }
        }
    }
    for (; i < m; ++i) {
        const T* ar = a + i * k;
        T* cr = c + i * n;
        for (size_t l = 0; l < k; ++l) {
            const T s = ar[l];
            const T* br = b + l * n;
            for (size_t j = 0; j < n; ++j) cr[j] += s * br[j];
        }
    }
}

/// c (k x n) += transpose(a) . b, with a (m x k), b (m x n)
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
    for (size_t l = 0; l < m; ++l) {
        const T* ar = a + l * k;
        const T* br = b + l * n;
        for (size_t i = 0; i < k; ++i) {
            const T s = ar[i];
            if (s == T(0)) continue;
            T* cr = c + i * n;
            for (size_t j = 0; j < n; ++j) cr[j] += s * br[j];
        }
    }
}

// Differentiable operations. Each checks shapes, computes the forward value,
// and records a backward closure on the tape. Gradients flow only into
// inputs with requires_grad set; outputs inherit the flag.

/// x (B x Din) . W (Din x Dout) + b (Dout), bias broadcast across rows.
template <typename T>
TensorPtr<T> linear(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b) {
    const size_t m = x->rows(), k = x->cols(), n = w->cols();
    if (w->rows() != k)
        throw Error(Errc::shape_mismatch, "linear: input width does not match weight rows");
    if (b->size() != n)
        throw Error(Errc::shape_mismatch, "linear: bias width does not match weight cols");
    auto y = make_tensor<T>({m, n});
    for (size_t i = 0; i < m; ++i)
        std::memcpy(y->value.data() + i * n, b->value.data(), n * sizeof(T));
    gemm_nn_acc(x->value.data(), w->value.data(), y->value.data(), m, k, n);
    y->requires_grad = x->requires_grad || w->requires_grad || b->requires_grad;
    if (y->requires_grad)
        tape.record([x, w, b, y, m, k, n] {
            const T* dy = y->grad.data();
            if (w->requires_grad) {
                w->ensure_grad();
                gemm_tn_acc(x->value.data(), dy, w->grad.data(), m, k, n);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < m; ++i) {
                    const T* dr = dy + i * n;
                    for (size_t j = 0; j < n; ++j) b->grad[j] += dr[j];
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                std::vector<T> wt(k * n);
                for (size_t i = 0; i < k; ++i)
                    for (size_t j = 0; j < n; ++j) wt[j * k + i] = w->value[i * n + j];
                gemm_nn_acc(dy, wt.data(), x->grad.data(), m, n, k);
            }
        });
    return y;
}

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x) {
    auto y = make_tensor<T>(x->shape);
    for (size_t i = 0; i < x->size(); ++i) y->value[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    y->requires_grad = x->requires_grad;
    if (y->requires_grad)
        tape.record([x, y] {
            x->ensure_grad();
            for (size_t i = 0; i < x->size(); ++i)
                if (x->value[i] > T(0)) x->grad[i] += y->grad[i];
        });
    return y;
}

/// Row-wise softmax with max subtraction; each output row sums to 1.
template <typename T>
TensorPtr<T> softmax_rows(Tape<T>& tape, const TensorPtr<T>& x) {
    const size_t m = x->rows(), n = x->cols();
    if (n == 0) throw Error(Errc::shape_mismatch, "softmax_rows: empty rows");
    auto y = make_tensor<T>(x->shape);
    for (size_t i = 0; i < m; ++i) {
        const T* xr = x->value.data() + i * n;
        T* yr = y->value.data() + i * n;
        T mx = xr[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        T sum = T(0);
        for (size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (size_t j = 0; j < n; ++j) yr[j] /= sum;
    }
    y->requires_grad = x->requires_grad;
    if (y->requires_grad)
        tape.record([x, y, m, n] {
            x->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const T* yr = y->value.data() + i * n;
                const T* dy = y->grad.data() + i * n;
                T dot = T(0);
                for (size_t j = 0; j < n; ++j) dot += dy[j] * yr[j];
                T* dx = x->grad.data() + i * n;
                for (size_t j = 0; j < n; ++j) dx[j] += yr[j] * (dy[j] - dot);
            }
        });
    return y;
}

/// Per-segment column-wise maximum. seg[i] assigns row i of x to an output
/// row; every segment id below seg_count must appear at least once. Gradient
/// routes to the argmax row only, lowest row index on ties.
template <typename T>
TensorPtr<T> segment_max(Tape<T>& tape, const TensorPtr<T>& x, const std::vector<size_t>& seg,
                         size_t seg_count) {
    const size_t m = x->rows(), n = x->cols();
    if (seg.size() != m)
        throw Error(Errc::shape_mismatch, "segment_max: one segment id per row required");
    if (m == 0 || seg_count == 0) throw Error(Errc::empty_input, "segment_max: no rows");
    auto y = make_tensor<T>({seg_count, n});
    auto armx = std::make_shared<std::vector<size_t>>(seg_count * n, SIZE_MAX);
    for (size_t i = 0; i < m; ++i) {
        const size_t s = seg[i];
        if (s >= seg_count)
            throw Error(Errc::shape_mismatch, "segment_max: segment id out of range");
        const T* xr = x->value.data() + i * n;
        T* yr = y->value.data() + s * n;
        size_t* ar = armx->data() + s * n;
        for (size_t j = 0; j < n; ++j) {
            if (ar[j] == SIZE_MAX || xr[j] > yr[j]) {
                yr[j] = xr[j];
                ar[j] = i;
            }
        }
    }
    for (size_t s = 0; s < seg_count; ++s)
        if ((*armx)[s * n] == SIZE_MAX)
            throw Error(Errc::empty_input, "segment_max: segment " + std::to_string(s) +
                                               " has no member rows");
    y->requires_grad = x->requires_grad;
    if (y->requires_grad)
        tape.record([x, y, armx, seg_count, n] {
            x->ensure_grad();
            for (size_t s = 0; s < seg_count; ++s)
                for (size_t j = 0; j < n; ++j)
                    x->grad[(*armx)[s * n + j] * n + j] += y->grad[s * n + j];
        });
    return y;
}

/// Column-wise maximum over all rows: the pooled feature of a point set.
template <typename T>
struct Pooled {
    TensorPtr<T> feature;
    std::vector<size_t> argmax;
};

template <typename T>
Pooled<T> max_pool_points(Tape<T>& tape, const TensorPtr<T>& x) {
    const size_t m = x->rows(), n = x->cols();
    if (m == 0 || n == 0) throw Error(Errc::empty_input, "max_pool_points: empty input");
    auto pooled = segment_max(tape, x, std::vector<size_t>(m, 0), 1);
    pooled->shape = {n};
    Pooled<T> out;
    out.argmax.assign(n, 0);
    for (size_t j = 0; j < n; ++j) {
        size_t best = 0;
        for (size_t i = 1; i < m; ++i)
            if (x->value[i * n + j] > x->value[best * n + j]) best = i;
        out.argmax[j] = best;
    }
    out.feature = std::move(pooled);
    return out;
}

/// Rows of x selected by idx, in idx order; duplicate indices allowed.
template <typename T>
TensorPtr<T> gather_rows(Tape<T>& tape, const TensorPtr<T>& x, const std::vector<size_t>& idx) {
    const size_t n = x->cols();
    auto y = make_tensor<T>({idx.size(), n});
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= x->rows())
            throw Error(Errc::shape_mismatch, "gather_rows: index out of range");
        std::memcpy(y->value.data() + k * n, x->value.data() + idx[k] * n, n * sizeof(T));
    }
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        auto taken = std::make_shared<std::vector<size_t>>(idx);
        tape.record([x, y, taken, n] {
            x->ensure_grad();
            for (size_t k = 0; k < taken->size(); ++k) {
                const T* dy = y->grad.data() + k * n;
                T* dx = x->grad.data() + (*taken)[k] * n;
                for (size_t j = 0; j < n; ++j) dx[j] += dy[j];
            }
        });
    }
    return y;
}

/// Horizontal concatenation of two matrices with equal row counts.
template <typename T>
TensorPtr<T> concat_cols(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const size_t m = a->rows(), na = a->cols(), nb = b->cols();
    if (b->rows() != m) throw Error(Errc::shape_mismatch, "concat_cols: row counts differ");
    auto y = make_tensor<T>({m, na + nb});
    for (size_t i = 0; i < m; ++i) {
        std::memcpy(y->value.data() + i * (na + nb), a->value.data() + i * na, na * sizeof(T));
        std::memcpy(y->value.data() + i * (na + nb) + na, b->value.data() + i * nb,
                    nb * sizeof(T));
    }
    y->requires_grad = a->requires_grad || b->requires_grad;
    if (y->requires_grad)
        tape.record([a, b, y, m, na, nb] {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const T* dy = y->grad.data() + i * (na + nb);
                if (a->requires_grad)
                    for (size_t j = 0; j < na; ++j) a->grad[i * na + j] += dy[j];
                if (b->requires_grad)
                    for (size_t j = 0; j < nb; ++j) b->grad[i * nb + j] += dy[na + j];
            }
        });
    return y;
}

template <typename T>
TensorPtr<T> scale(Tape<T>& tape, const TensorPtr<T>& x, T factor) {
    auto y = make_tensor<T>(x->shape);
    for (size_t i = 0; i < x->size(); ++i) y->value[i] = factor * x->value[i];
    y->requires_grad = x->requires_grad;
    if (y->requires_grad)
        tape.record([x, y, factor] {
            x->ensure_grad();
            for (size_t i = 0; i < x->size(); ++i) x->grad[i] += factor * y->grad[i];
        });
    return y;
}

/// Weighted mean negative log-likelihood over the batch, stable via
/// log-sum-exp. class_weights is either empty (uniform) or one weight per
/// class; row i contributes class_weights[labels[i]] / sum of row weights.
template <typename T>
TensorPtr<T> cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits,
                           const std::vector<size_t>& labels,
                           const std::vector<T>& class_weights = {}) {
    const size_t m = logits->rows(), n = logits->cols();
    if (labels.size() != m)
        throw Error(Errc::shape_mismatch, "cross_entropy: one label per row required");
    if (m == 0) throw Error(Errc::empty_input, "cross_entropy: empty batch");
    if (!class_weights.empty() && class_weights.size() != n)
        throw Error(Errc::shape_mismatch, "cross_entropy: one weight per class required");
    for (size_t l : labels)
        if (l >= n)
            throw Error(Errc::label_out_of_range,
                        "cross_entropy: label " + std::to_string(l) + " with " +
                            std::to_string(n) + " classes");

    auto coeff = std::make_shared<std::vector<T>>(m);
    T wsum = T(0);
    for (size_t i = 0; i < m; ++i) {
        (*coeff)[i] = class_weights.empty() ? T(1) : class_weights[labels[i]];
        wsum += (*coeff)[i];
    }
    for (auto& c : *coeff) c /= wsum;

    auto loss = make_tensor<T>({size_t(1)});
    T acc = T(0);
    for (size_t i = 0; i < m; ++i) {
        const T* zr = logits->value.data() + i * n;
        T mx = zr[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, zr[j]);
        T sum = T(0);
        for (size_t j = 0; j < n; ++j) sum += std::exp(zr[j] - mx);
        acc += (*coeff)[i] * (mx + std::log(sum) - zr[labels[i]]);
    }
    loss->value[0] = acc;
    loss->requires_grad = logits->requires_grad;
    if (loss->requires_grad) {
        auto lab = std::make_shared<std::vector<size_t>>(labels);
        tape.record([logits, loss, lab, coeff, m, n] {
            logits->ensure_grad();
            const T g = loss->grad[0];
            for (size_t i = 0; i < m; ++i) {
                const T* zr = logits->value.data() + i * n;
                T* dz = logits->grad.data() + i * n;
                T mx = zr[0];
                for (size_t j = 1; j < n; ++j) mx = std::max(mx, zr[j]);
                T sum = T(0);
                for (size_t j = 0; j < n; ++j) sum += std::exp(zr[j] - mx);
                const T c = (*coeff)[i] * g;
                for (size_t j = 0; j < n; ++j) {
                    const T p = std::exp(zr[j] - mx) / sum;
                    dz[j] += c * (p - T(j == (*lab)[i] ? 1 : 0));
                }
            }
        });
    }
    return loss;
}

/// Named parameter collection with stable iteration order.
template <typename T>
struct ParamStore {
    std::vector<std::string> names;
    std::unordered_map<std::string, TensorPtr<T>> by_name;

    TensorPtr<T> create(const std::string& name, std::vector<size_t> shape) {
        if (by_name.count(name))
            throw std::invalid_argument("parameter '" + name + "' already exists");
        auto t = make_tensor<T>(std::move(shape), true);
        names.push_back(name);
        by_name.emplace(name, t);
        return t;
    }
    const TensorPtr<T>& get(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw Error(Errc::checkpoint_mismatch, "unknown parameter '" + name + "'");
        return it->second;
    }
    void zero_grad() {
        for (const auto& n : names) by_name.at(n)->zero_grad();
    }
};

/// Adam first/second moment buffers plus the shared step counter.
template <typename T>
struct AdamState {
    uint64_t step = 0;
    std::unordered_map<std::string, std::vector<T>> m;
    std::unordered_map<std::string, std::vector<T>> v;
};

/// One Adam update with bias correction over every parameter in the store.
/// Every parameter must carry a populated gradient buffer.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, T lr, T beta1, T beta2, T eps) {
    for (const auto& name : params.names) {
        const auto& p = params.by_name.at(name);
        if (p->grad.size() != p->value.size())
            throw Error(Errc::missing_gradient, "parameter '" + name + "' has no gradient");
    }
    state.step += 1;
    const T bc1 = T(1) - std::pow(beta1, T(state.step));
    const T bc2 = T(1) - std::pow(beta2, T(state.step));
    for (const auto& name : params.names) {
        const auto& p = params.by_name.at(name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != p->size()) m.assign(p->size(), T(0));
        if (v.size() != p->size()) v.assign(p->size(), T(0));
        for (size_t i = 0; i < p->size(); ++i) {
            const T g = p->grad[i];
            m[i] = beta1 * m[i] + (T(1) - beta1) * g;
            v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Checkpoint container. The binary layout lives in nn.cpp:
// "EVFC" | version u32 LE | meta length u64 LE | meta JSON bytes |
// tensor count u64 LE | per tensor { name length u64 LE, name bytes,
// rank u64 LE, dims u64 LE each, values f64 LE }.

struct NamedTensor {
    std::string name;
    std::vector<size_t> dims;
    std::vector<double> values;
};

struct Checkpoint {
    uint32_t version = 1;
    std::string meta_json;
    std::vector<NamedTensor> tensors;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const uint8_t> bytes);

/// Copies parameters and optimizer state into checkpoint tensors, prefixed
/// "param." / "opt.m." / "opt.v.", in parameter-store order.
template <typename T>
void store_state(Checkpoint& ckpt, const ParamStore<T>& params, const AdamState<T>& adam) {
    for (const auto& name : params.names) {
        const auto& p = params.by_name.at(name);
        NamedTensor nt;
        nt.name = "param." + name;
        nt.dims = p->shape;
        nt.values.assign(p->value.begin(), p->value.end());
        ckpt.tensors.push_back(std::move(nt));
    }
    auto store_bank = [&](const char* kind,
                          const std::unordered_map<std::string, std::vector<T>>& bank) {
        for (const auto& name : params.names) {
            auto it = bank.find(name);
            if (it == bank.end()) continue;
            NamedTensor nt;
            nt.name = std::string("opt.") + kind + "." + name;
            nt.dims = {it->second.size()};
            nt.values.assign(it->second.begin(), it->second.end());
            ckpt.tensors.push_back(std::move(nt));
        }
    };
    store_bank("m", adam.m);
    store_bank("v", adam.v);
}

/// Restores parameter values (and optimizer moments when present) from a
/// checkpoint into an already-shaped store. Unknown names, missing names, or
/// shape disagreements are checkpoint mismatches.
template <typename T>
void load_state(const Checkpoint& ckpt, ParamStore<T>& params, AdamState<T>* adam) {
    size_t loaded = 0;
    for (const auto& nt : ckpt.tensors) {
        if (nt.name.starts_with("param.")) {
            const std::string name = nt.name.substr(6);
            const auto& p = params.get(name);
            if (nt.dims != p->shape)
                throw Error(Errc::checkpoint_mismatch,
                            "parameter '" + name + "' has a different shape in the checkpoint");
            for (size_t i = 0; i < p->size(); ++i) p->value[i] = T(nt.values[i]);
            loaded += 1;
        } else if (adam && nt.name.starts_with("opt.m.")) {
            adam->m[nt.name.substr(6)].assign(nt.values.begin(), nt.values.end());
        } else if (adam && nt.name.starts_with("opt.v.")) {
            adam->v[nt.name.substr(6)].assign(nt.values.begin(), nt.values.end());
        }
    }
    if (loaded != params.names.size())
        throw Error(Errc::checkpoint_mismatch, "checkpoint covers " + std::to_string(loaded) +
                                                   " of " + std::to_string(params.names.size()) +
                                                   " parameters");
}

} // namespace evf::nn
