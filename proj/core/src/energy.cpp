#include "ebsg/energy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ebsg {

namespace {

struct EnergyOffsets {
    std::size_t embed, w_xh, w_hh, b_h, h0, w_out, b_out, total;
};

EnergyOffsets energy_offsets(const RecurrentEnergy& e) {
    const auto V = static_cast<std::size_t>(e.vocab_size);
    const auto E = static_cast<std::size_t>(e.embed_dim);
    const auto H = static_cast<std::size_t>(e.hidden_dim);
    EnergyOffsets o{};
    o.embed = 0;
    o.w_xh = o.embed + V * E;
    o.w_hh = o.w_xh + H * E;
    o.b_h = o.w_hh + H * H;
    o.h0 = o.b_h + H;
    o.w_out = o.h0 + H;
    o.b_out = o.w_out + H;
    o.total = o.b_out + 1;
    return o;
}

Vector cell_step(const RecurrentEnergy& e, std::span<const double> x,
                 std::span<const double> h_prev) {
    Vector a = matvec(e.w_xh, x);
    add_scaled(a, matvec(e.w_hh, h_prev), 1.0);
    add_scaled(a, e.b_h, 1.0);
    for (double& v : a) {
        v = std::tanh(v);
    }
    return a;
}

}  // namespace

LinearEnergy make_linear_energy(int vocab_size) {
    if (vocab_size < 2) {
        throw std::invalid_argument("make_linear_energy: vocab_size must be >= 2");
    }
    LinearEnergy e;
    e.vocab_size = vocab_size;
    e.init_cost = Vector(static_cast<std::size_t>(vocab_size), 0.0);
    e.trans_cost = Matrix(vocab_size, vocab_size, 0.0);
    return e;
}

RecurrentEnergy make_recurrent_energy(int vocab_size, int embed_dim, int hidden_dim,
                                      std::uint64_t seed) {
    if (vocab_size < 2) {
        throw std::invalid_argument("make_recurrent_energy: vocab_size must be >= 2");
    }
    if (embed_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("make_recurrent_energy: dims must be >= 1");
    }
    RecurrentEnergy e;
    e.vocab_size = vocab_size;
    e.embed_dim = embed_dim;
    e.hidden_dim = hidden_dim;
    e.embed = Matrix(vocab_size, embed_dim);
    e.w_xh = Matrix(hidden_dim, embed_dim);
    e.w_hh = Matrix(hidden_dim, hidden_dim);
    e.b_h = Vector(static_cast<std::size_t>(hidden_dim));
    e.h0 = Vector(static_cast<std::size_t>(hidden_dim));
    e.w_out = Vector(static_cast<std::size_t>(hidden_dim));

    Rng rng(seed);
    auto fill = [&rng](Vector& v) {
        for (double& p : v) {
            p = rng.uniform(-0.1, 0.1);
        }
    };
    fill(e.embed.data());
    fill(e.w_xh.data());
    fill(e.w_hh.data());
    fill(e.b_h);
    fill(e.h0);
    fill(e.w_out);
    e.b_out = rng.uniform(-0.1, 0.1);
    return e;
}

double energy(const EnergyModel& e, std::span<const ItemId> seq) {
    validate_items(seq, vocab_size(e));
    if (seq.empty()) {
        throw std::invalid_argument("energy: empty sequence");
    }
    if (const auto* lin = std::get_if<LinearEnergy>(&e)) {
        double total = lin->init_cost[static_cast<std::size_t>(seq[0])];
        for (std::size_t t = 1; t < seq.size(); ++t) {
            total += lin->trans_cost(seq[t - 1], seq[t]);
        }
        return total;
    }
    const auto& rec = std::get<RecurrentEnergy>(e);
    Vector h(rec.h0.begin(), rec.h0.end());
    for (ItemId item : seq) {
        h = cell_step(rec, rec.embed.row(item), h);
    }
    return dot(rec.w_out, h) + rec.b_out;
}

Vector grad_energy(const EnergyModel& e, std::span<const ItemId> seq) {
    validate_items(seq, vocab_size(e));
    if (seq.empty()) {
        throw std::invalid_argument("grad_energy: empty sequence");
    }
    if (std::holds_alternative<LinearEnergy>(e)) {
        return feature_counts(seq, vocab_size(e));
    }

    const auto& rec = std::get<RecurrentEnergy>(e);
    const int T = static_cast<int>(seq.size());
    const int E = rec.embed_dim;
    const int H = rec.hidden_dim;
    const EnergyOffsets off = energy_offsets(rec);
    Vector grad(off.total, 0.0);

    std::vector<Vector> hs(static_cast<std::size_t>(T) + 1);
    hs[0] = Vector(rec.h0.begin(), rec.h0.end());
    for (int t = 0; t < T; ++t) {
        hs[static_cast<std::size_t>(t) + 1] =
            cell_step(rec, rec.embed.row(seq[static_cast<std::size_t>(t)]),
                      hs[static_cast<std::size_t>(t)]);
    }

    // energy = w_out . h_T + b_out
    const Vector& h_final = hs[static_cast<std::size_t>(T)];
    for (int k = 0; k < H; ++k) {
        grad[off.w_out + static_cast<std::size_t>(k)] = h_final[static_cast<std::size_t>(k)];
    }
    grad[off.b_out] = 1.0;

    Vector dh(rec.w_out.begin(), rec.w_out.end());
    for (int t = T - 1; t >= 0; --t) {
        const Vector& h = hs[static_cast<std::size_t>(t) + 1];
        const Vector& h_prev = hs[static_cast<std::size_t>(t)];
        Vector da(static_cast<std::size_t>(H));
        for (int k = 0; k < H; ++k) {
            const double hk = h[static_cast<std::size_t>(k)];
            da[static_cast<std::size_t>(k)] = dh[static_cast<std::size_t>(k)] * (1.0 - hk * hk);
        }
        std::span<const double> x = rec.embed.row(seq[static_cast<std::size_t>(t)]);
        for (int k = 0; k < H; ++k) {
            const double dak = da[static_cast<std::size_t>(k)];
            grad[off.b_h + static_cast<std::size_t>(k)] += dak;
            const std::size_t xh_base =
                off.w_xh + static_cast<std::size_t>(k) * static_cast<std::size_t>(E);
            for (int j = 0; j < E; ++j) {
                grad[xh_base + static_cast<std::size_t>(j)] += dak * x[static_cast<std::size_t>(j)];
            }
            const std::size_t hh_base =
                off.w_hh + static_cast<std::size_t>(k) * static_cast<std::size_t>(H);
            for (int j = 0; j < H; ++j) {
                grad[hh_base + static_cast<std::size_t>(j)] +=
                    dak * h_prev[static_cast<std::size_t>(j)];
            }
        }
        Vector dx = matvec_transpose(rec.w_xh, da);
        const std::size_t x_base =
            off.embed + static_cast<std::size_t>(seq[static_cast<std::size_t>(t)]) *
                            static_cast<std::size_t>(E);
        for (int j = 0; j < E; ++j) {
            grad[x_base + static_cast<std::size_t>(j)] += dx[static_cast<std::size_t>(j)];
        }
        dh = matvec_transpose(rec.w_hh, da);
    }
    for (int k = 0; k < H; ++k) {
        grad[off.h0 + static_cast<std::size_t>(k)] += dh[static_cast<std::size_t>(k)];
    }
    return grad;
}

Vector feature_counts(std::span<const ItemId> seq, int vocab_size) {
    validate_items(seq, vocab_size);
    if (seq.empty()) {
        throw std::invalid_argument("feature_counts: empty sequence");
    }
    Vector f(feature_dim(vocab_size), 0.0);
    f[static_cast<std::size_t>(seq[0])] += 1.0;
    const auto V = static_cast<std::size_t>(vocab_size);
    for (std::size_t t = 1; t < seq.size(); ++t) {
        f[V + static_cast<std::size_t>(seq[t - 1]) * V + static_cast<std::size_t>(seq[t])] += 1.0;
    }
    return f;
}

std::size_t feature_dim(int vocab_size) {
    const auto V = static_cast<std::size_t>(vocab_size);
    return V + V * V;
}

std::size_t param_count(const EnergyModel& e) {
    if (const auto* lin = std::get_if<LinearEnergy>(&e)) {
        return lin->init_cost.size() + lin->trans_cost.size();
    }
    return energy_offsets(std::get<RecurrentEnergy>(e)).total;
}

Vector param_vector(const EnergyModel& e) {
    Vector out;
    out.reserve(param_count(e));
    if (const auto* lin = std::get_if<LinearEnergy>(&e)) {
        out.insert(out.end(), lin->init_cost.begin(), lin->init_cost.end());
        out.insert(out.end(), lin->trans_cost.data().begin(), lin->trans_cost.data().end());
        return out;
    }
    const auto& rec = std::get<RecurrentEnergy>(e);
    out.insert(out.end(), rec.embed.data().begin(), rec.embed.data().end());
    out.insert(out.end(), rec.w_xh.data().begin(), rec.w_xh.data().end());
    out.insert(out.end(), rec.w_hh.data().begin(), rec.w_hh.data().end());
    out.insert(out.end(), rec.b_h.begin(), rec.b_h.end());
    out.insert(out.end(), rec.h0.begin(), rec.h0.end());
    out.insert(out.end(), rec.w_out.begin(), rec.w_out.end());
    out.push_back(rec.b_out);
    return out;
}

void set_params(EnergyModel& e, std::span<const double> params) {
    if (params.size() != param_count(e)) {
        throw std::invalid_argument("set_params: expected " + std::to_string(param_count(e)) +
                                    " parameters, got " + std::to_string(params.size()));
    }
    std::size_t pos = 0;
    auto take = [&](Vector& dst) {
        std::copy(params.begin() + static_cast<std::ptrdiff_t>(pos),
                  params.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
        pos += dst.size();
    };
    if (auto* lin = std::get_if<LinearEnergy>(&e)) {
        take(lin->init_cost);
        take(lin->trans_cost.data());
        return;
    }
    auto& rec = std::get<RecurrentEnergy>(e);
    take(rec.embed.data());
    take(rec.w_xh.data());
    take(rec.w_hh.data());
    take(rec.b_h);
    take(rec.h0);
    take(rec.w_out);
    rec.b_out = params[pos];
}

void add_scaled_params(EnergyModel& e, std::span<const double> delta, double scale) {
    if (delta.size() != param_count(e)) {
        throw std::invalid_argument("add_scaled_params: size mismatch");
    }
    std::size_t pos = 0;
    auto apply = [&](Vector& dst) {
        add_scaled(dst, delta.subspan(pos, dst.size()), scale);
        pos += dst.size();
    };
    if (auto* lin = std::get_if<LinearEnergy>(&e)) {
        apply(lin->init_cost);
        apply(lin->trans_cost.data());
        return;
    }
    auto& rec = std::get<RecurrentEnergy>(e);
    apply(rec.embed.data());
    apply(rec.w_xh.data());
    apply(rec.w_hh.data());
    apply(rec.b_h);
    apply(rec.h0);
    apply(rec.w_out);
    rec.b_out += scale * delta[pos];
}

int vocab_size(const EnergyModel& e) {
    if (const auto* lin = std::get_if<LinearEnergy>(&e)) {
        return lin->vocab_size;
    }
    return std::get<RecurrentEnergy>(e).vocab_size;
}

}  // namespace ebsg
