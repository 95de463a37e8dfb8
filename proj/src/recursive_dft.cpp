#include "stnn/recursive_dft.hpp"

#include <cmath>

namespace stnn {

ChainLayout ChainLayout::make(std::size_t size, int depth, const ChainOptions& options) {
    if (!is_power_of_two(size)) throw ConfigError("recursive DFT size must be a power of two, got " + std::to_string(size));
    const int max_depth = log2_exact(size);
    if (depth < 1 || depth > max_depth)
        throw ConfigError("recursive DFT depth " + std::to_string(depth) + " outside [1, " + std::to_string(max_depth) + "] for size " +
                          std::to_string(size));

    ChainLayout layout;
    layout.size = size;
    layout.depth = depth;
    layout.leaf_size = size >> depth;
    layout.independent_twiddles = options.independent_twiddles;
    layout.pin_gauge = options.pin_gauge;
    layout.scale = options.normalized ? 1.0 / std::sqrt(static_cast<double>(std::size_t{1} << depth)) : 1.0;

    // Undo the block layout one level at a time, innermost first.
    std::vector<std::size_t> pos(size);
    for (std::size_t i = 0; i < size; ++i) pos[i] = i;
    std::vector<std::size_t> next(size);
    for (int level = depth - 1; level >= 0; --level) {
        const std::size_t h = layout.half(level);
        for (std::size_t start = 0; start < size; start += 2 * h) {
            for (std::size_t k = 0; k < h; ++k) {
                next[start + 2 * k] = pos[start + k];
                next[start + 2 * k + 1] = pos[start + h + k];
            }
        }
        pos.swap(next);
    }
    layout.output_perm = std::move(pos);
    return layout;
}

ChainParams ChainParams::zeros(const ChainLayout& layout) {
    ChainParams p;
    p.twiddles.resize(static_cast<std::size_t>(layout.depth));
    for (int level = 0; level < layout.depth; ++level) p.twiddles[level].assign(layout.twiddle_count(level), cplx{});
    p.leaf.assign(layout.leaf_size * layout.leaf_size, cplx{});
    return p;
}

ChainParams ChainParams::exact(const ChainLayout& layout, bool inverse, bool normalized) {
    ChainParams p = zeros(layout);
    const double sign = inverse ? 1.0 : -1.0;
    for (int level = 0; level < layout.depth; ++level) {
        const std::size_t h = layout.half(level);
        auto& tw = p.twiddles[level];
        for (std::size_t i = 0; i < tw.size(); ++i) {
            const std::size_t k = i % h;
            const double a = sign * kPi * static_cast<double>(k) / static_cast<double>(h);
            tw[i] = {std::cos(a), std::sin(a)};
        }
    }
    const std::size_t l = layout.leaf_size;
    const double s = normalized ? 1.0 / std::sqrt(static_cast<double>(l)) : 1.0;
    for (std::size_t r = 0; r < l; ++r) {
        for (std::size_t c = 0; c < l; ++c) {
            const double a = sign * 2.0 * kPi * static_cast<double>((r * c) % l) / static_cast<double>(l);
            p.leaf[r * l + c] = s * cplx{std::cos(a), std::sin(a)};
        }
    }
    return p;
}

CVector chain_apply(const ChainLayout& layout, const ChainParams& params, std::span<const cplx> x, ChainTrace* trace,
                    OpCounter* counter) {
    const std::size_t n = layout.size;
    if (x.size() != n) throw ShapeError("recursive DFT: input length " + std::to_string(x.size()) + ", expected " + std::to_string(n));

    CVector buf(x.begin(), x.end());
    if (trace) trace->level_inputs.resize(static_cast<std::size_t>(layout.depth));

    for (int level = 0; level < layout.depth; ++level) {
        if (trace) trace->level_inputs[level] = buf;
        const std::size_t h = layout.half(level);
        const CVector& tw = params.twiddles[level];
        std::size_t block = 0;
        for (std::size_t start = 0; start < n; start += 2 * h, ++block) {
            const cplx* d = tw.data() + (layout.independent_twiddles ? block * h : 0);
            for (std::size_t k = 0; k < h; ++k) {
                const cplx a = buf[start + k];
                const cplx c = buf[start + h + k];
                buf[start + k] = a + c;
                buf[start + h + k] = d[k] * (a - c);
            }
        }
        if (counter) {
            counter->complex_add(n);
            counter->complex_mul(n / 2);
        }
    }
    if (trace) trace->leaf_input = buf;

    const std::size_t l = layout.leaf_size;
    CVector leaf_out(n);
    for (std::size_t start = 0; start < n; start += l) {
        for (std::size_t r = 0; r < l; ++r) {
            cplx acc = 0.0;
            for (std::size_t c = 0; c < l; ++c) acc += params.leaf[r * l + c] * buf[start + c];
            leaf_out[start + r] = acc;
        }
    }
    if (counter) {
        counter->complex_mul(n * l);
        counter->complex_add(n * (l - 1));
    }

    CVector out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = layout.scale * leaf_out[layout.output_perm[i]];
    if (counter && layout.scale != 1.0) counter->muls += 2 * n;
    return out;
}

void chain_backward(const ChainLayout& layout, const ChainParams& params, const ChainTrace& trace,
                    std::span<const cplx> grad_out, std::span<cplx> grad_in, ChainParams& grad) {
    const std::size_t n = layout.size;
    if (grad_out.size() != n || grad_in.size() != n) throw ShapeError("recursive DFT backward: length mismatch");
    if (trace.level_inputs.size() != static_cast<std::size_t>(layout.depth) || trace.leaf_input.size() != n)
        throw ShapeError("recursive DFT backward: trace does not belong to this chain");

    CVector g_leaf_out(n);
    for (std::size_t i = 0; i < n; ++i) g_leaf_out[layout.output_perm[i]] = layout.scale * grad_out[i];

    const std::size_t l = layout.leaf_size;
    CVector g(n);
    for (std::size_t start = 0; start < n; start += l) {
        for (std::size_t r = 0; r < l; ++r) {
            const cplx gr = g_leaf_out[start + r];
            for (std::size_t c = 0; c < l; ++c) {
                grad.leaf[r * l + c] += gr * std::conj(trace.leaf_input[start + c]);
                g[start + c] += std::conj(params.leaf[r * l + c]) * gr;
            }
        }
    }

    for (int level = layout.depth - 1; level >= 0; --level) {
        const std::size_t h = layout.half(level);
        const CVector& x = trace.level_inputs[level];
        const CVector& tw = params.twiddles[level];
        CVector& gtw = grad.twiddles[level];
        std::size_t block = 0;
        for (std::size_t start = 0; start < n; start += 2 * h, ++block) {
            const std::size_t off = layout.independent_twiddles ? block * h : 0;
            for (std::size_t k = 0; k < h; ++k) {
                const cplx diff = x[start + k] - x[start + h + k];
                const cplx g_top = g[start + k];
                const cplx g_bot = g[start + h + k];
                gtw[off + k] += g_bot * std::conj(diff);
                const cplx g_diff = std::conj(tw[off + k]) * g_bot;
                g[start + k] = g_top + g_diff;
                g[start + h + k] = g_top - g_diff;
            }
        }
    }
    std::copy(g.begin(), g.end(), grad_in.begin());
}

namespace {

std::span<double> as_reals(cplx* data, std::size_t count) {
    return {reinterpret_cast<double*>(data), 2 * count};
}

}  // namespace

void for_each_trainable(const ChainLayout& layout, ChainParams& params, const std::string& prefix,
                        const std::function<void(const std::string&, std::span<double>)>& fn) {
    const std::size_t skip = layout.pin_gauge ? 1 : 0;
    for (int level = 0; level < layout.depth; ++level) {
        const std::size_t h = layout.half(level);
        CVector& tw = params.twiddles[level];
        const std::string name = prefix + ".twiddle" + std::to_string(level);
        if (layout.independent_twiddles) {
            for (std::size_t b = 0; b < layout.blocks(level); ++b) {
                if (h > skip) fn(name + "." + std::to_string(b), as_reals(tw.data() + b * h + skip, h - skip));
            }
        } else if (h > skip) {
            fn(name, as_reals(tw.data() + skip, h - skip));
        }
    }
    if (params.leaf.size() > skip) fn(prefix + ".leaf", as_reals(params.leaf.data() + skip, params.leaf.size() - skip));
}

std::size_t trainable_scalar_count(const ChainLayout& layout) {
    ChainParams scratch = ChainParams::zeros(layout);
    std::size_t total = 0;
    for_each_trainable(layout, scratch, "", [&](const std::string&, std::span<double> v) { total += v.size(); });
    return total;
}

void count_chain_ops(const ChainLayout& layout, std::uint64_t complex_mul_cost, std::uint64_t complex_mul_adds,
                     OpCounter& counter) {
    const std::uint64_t n = layout.size;
    const std::uint64_t l = layout.leaf_size;
    const auto depth = static_cast<std::uint64_t>(layout.depth);
    // butterflies: n complex add/sub and n/2 twiddle products per level
    counter.adds += depth * 2 * n;
    counter.muls += depth * (n / 2) * complex_mul_cost;
    counter.adds += depth * (n / 2) * complex_mul_adds;
    // leaf blocks: dense l x l complex products, n/l of them
    counter.complex_mul(n * l);
    counter.complex_add(n * (l - 1));
}

ComplexMatrix RecursiveDftChain::to_dense() const {
    const std::size_t n = layout_.size;
    ComplexMatrix out(n, n);
    CVector e(n);
    for (std::size_t c = 0; c < n; ++c) {
        e[c] = 1.0;
        out.set_column(c, apply(e));
        e[c] = 0.0;
    }
    return out;
}

RecursiveDftChain build_recursive_dft_chain(std::size_t size, int depth, bool exact, const ChainOptions& options) {
    ChainLayout layout = ChainLayout::make(size, depth, options);
    ChainParams params = exact ? ChainParams::exact(layout, options.inverse, options.normalized) : ChainParams::zeros(layout);
    return RecursiveDftChain(std::move(layout), std::move(params));
}

}  // namespace stnn
