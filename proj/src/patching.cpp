#include "mrf/patching.hpp"

#include <map>
#include <mutex>
#include <numeric>

#include "mrf/errors.hpp"

namespace mrf {

BranchGeometry BranchGeometry::make(std::size_t length, std::size_t period, std::size_t model_width) {
    if (period < 1) throw ContractError("branch period must be >= 1");
    BranchGeometry g;
    g.period = period;
    g.num_patches = (length + period - 1) / period;
    g.pad_len = g.num_patches * period - length;
    g.model_width = model_width;
    return g;
}

Tensor pad_to_multiple(const Tensor& x, std::size_t period) {
    if (period < 1) throw ContractError("pad_to_multiple: period must be >= 1");
    if (x.rank() != 3) throw ShapeError("pad_to_multiple: expected [B, I, V], got " + shape_str(x.shape()));
    const std::size_t length = x.dim(1);
    const std::size_t pad = (period - length % period) % period;
    if (pad == 0) return x;
    std::vector<std::size_t> idx(length + pad, length - 1);
    std::iota(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(length), std::size_t{0});
    return index_select(x, 1, idx);
}

Tensor segment(const Tensor& x, std::size_t period) {
    if (x.rank() != 3) throw ShapeError("segment: expected [B, L, V], got " + shape_str(x.shape()));
    if (period < 1 || x.dim(1) % period != 0)
        throw ContractError("segment: length " + std::to_string(x.dim(1)) + " is not a multiple of period " +
                            std::to_string(period) + "; pad first");
    const std::size_t B = x.dim(0), L = x.dim(1), V = x.dim(2);
    return reshape(permute(x, {0, 2, 1}), {B, V, L / period, period});
}

namespace {

SparseMap build_resize(std::size_t from, std::size_t to) {
    SparseMap m;
    m.in_size = from;
    m.out_size = to;
    auto emit = [&](std::size_t j, std::size_t num, std::size_t den) {
        // Sample position num / den on the input grid.
        const std::size_t i0 = num / den;
        const std::size_t rem = num % den;
        if (rem == 0 || i0 + 1 >= from) {
            m.entries.push_back({j, i0, 1.0});
            return;
        }
        const double frac = static_cast<double>(rem) / static_cast<double>(den);
        m.entries.push_back({j, i0, 1.0 - frac});
        m.entries.push_back({j, i0 + 1, frac});
    };
    if (from == 1) {
        for (std::size_t j = 0; j < to; ++j) m.entries.push_back({j, 0, 1.0});
    } else if (to == 1) {
        emit(0, from - 1, 2);  // midpoint
    } else {
        for (std::size_t j = 0; j < to; ++j) emit(j, j * (from - 1), to - 1);
    }
    return m;
}

}  // namespace

std::shared_ptr<const SparseMap> resize_weights(std::size_t from, std::size_t to) {
    if (from < 1 || to < 1) throw ContractError("resize_linear: lengths must be >= 1");
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const SparseMap>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{from, to}];
    if (!slot) slot = std::make_shared<const SparseMap>(build_resize(from, to));
    return slot;
}

Tensor resize_linear(const Tensor& patches, std::size_t target) {
    if (patches.rank() == 0) throw ShapeError("resize_linear: scalar input");
    const std::size_t p = patches.dim(patches.rank() - 1);
    if (p == target) return patches;
    return apply_last_axis(patches, *resize_weights(p, target));
}

Tensor flatten_truncate(const Tensor& patches, std::size_t original_len) {
    if (patches.rank() != 4) throw ShapeError("flatten_truncate: expected [B, V, NP, p], got " + shape_str(patches.shape()));
    const std::size_t B = patches.dim(0), V = patches.dim(1);
    const std::size_t total = patches.dim(2) * patches.dim(3);
    if (total < original_len || original_len == 0)
        throw ContractError("flatten_truncate: " + std::to_string(total) + " flattened steps cannot cover length " +
                            std::to_string(original_len));
    Tensor flat = reshape(patches, {B, V, total});
    if (total != original_len) flat = slice(flat, 2, 0, original_len);
    return permute(flat, {0, 2, 1});
}

}  // namespace mrf
