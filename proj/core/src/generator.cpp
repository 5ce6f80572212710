#include "ebsg/generator.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ebsg {

namespace {

constexpr std::int64_t kMaxTableRows = 1'000'000;

std::int64_t table_rows(int vocab_size, int context_len) {
    std::int64_t rows = 1;
    for (int i = 0; i < context_len; ++i) {
        rows *= vocab_size;
        if (rows > kMaxTableRows) {
            throw std::invalid_argument("tabular generator: context table would exceed " +
                                        std::to_string(kMaxTableRows) + " rows");
        }
    }
    return rows;
}

int context_length_at(const TabularGenerator& g, int position) {
    return position < g.order ? position : g.order;
}

int table_index_at(const TabularGenerator& g, int position) {
    if (g.stationary) {
        return context_length_at(g, position);
    }
    if (position >= g.horizon) {
        throw std::invalid_argument("tabular generator: position " + std::to_string(position) +
                                    " is past the model horizon " + std::to_string(g.horizon));
    }
    return position;
}

/// Row index of the last-j-item context ending at `position` (exclusive).
int context_row(const TabularGenerator& g, std::span<const ItemId> prefix, int position) {
    const int j = context_length_at(g, position);
    int row = 0;
    for (int i = position - j; i < position; ++i) {
        row = row * g.vocab_size + prefix[static_cast<std::size_t>(i)];
    }
    return row;
}

Vector log_softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    Vector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - lse;
    }
    return out;
}

std::size_t tabular_param_count(const TabularGenerator& g) {
    std::size_t n = 0;
    for (const Matrix& t : g.tables) {
        n += t.size();
    }
    return n;
}

/// Flat offset of a table's first parameter within the concatenated vector.
std::size_t table_offset(const TabularGenerator& g, int table) {
    std::size_t off = 0;
    for (int i = 0; i < table; ++i) {
        off += g.tables[static_cast<std::size_t>(i)].size();
    }
    return off;
}

struct RecurrentOffsets {
    std::size_t embed, bos, w_xh, w_hh, b_h, h0, w_out, b_out, total;
};

RecurrentOffsets recurrent_offsets(const RecurrentGenerator& g) {
    const auto V = static_cast<std::size_t>(g.vocab_size);
    const auto E = static_cast<std::size_t>(g.embed_dim);
    const auto H = static_cast<std::size_t>(g.hidden_dim);
    RecurrentOffsets o{};
    o.embed = 0;
    o.bos = o.embed + V * E;
    o.w_xh = o.bos + E;
    o.w_hh = o.w_xh + H * E;
    o.b_h = o.w_hh + H * H;
    o.h0 = o.b_h + H;
    o.w_out = o.h0 + H;
    o.b_out = o.w_out + V * H;
    o.total = o.b_out + V;
    return o;
}

Vector rnn_step(const RecurrentGenerator& g, std::span<const double> x,
                std::span<const double> h_prev) {
    Vector a = matvec(g.w_xh, x);
    add_scaled(a, matvec(g.w_hh, h_prev), 1.0);
    add_scaled(a, g.b_h, 1.0);
    for (double& v : a) {
        v = std::tanh(v);
    }
    return a;
}

Vector rnn_logits(const RecurrentGenerator& g, std::span<const double> h) {
    Vector logits = matvec(g.w_out, h);
    add_scaled(logits, g.b_out, 1.0);
    return logits;
}

std::span<const double> rnn_input(const RecurrentGenerator& g, std::span<const ItemId> items,
                                  int position) {
    if (position == 0) {
        return g.bos;
    }
    return g.embed.row(items[static_cast<std::size_t>(position - 1)]);
}

}  // namespace

TabularGenerator make_tabular_generator(int vocab_size, int order, int horizon) {
    if (vocab_size < 2) {
        throw std::invalid_argument("make_tabular_generator: vocab_size must be >= 2");
    }
    if (order < 1) {
        throw std::invalid_argument("make_tabular_generator: order must be >= 1");
    }
    if (horizon < 0) {
        throw std::invalid_argument("make_tabular_generator: horizon must be >= 0");
    }
    TabularGenerator g;
    g.vocab_size = vocab_size;
    g.order = order;
    g.stationary = horizon == 0;
    g.horizon = horizon;
    const int n_tables = g.stationary ? order + 1 : horizon;
    g.tables.reserve(static_cast<std::size_t>(n_tables));
    for (int t = 0; t < n_tables; ++t) {
        const int j = g.stationary ? t : context_length_at(g, t);
        g.tables.emplace_back(static_cast<int>(table_rows(vocab_size, j)), vocab_size, 0.0);
    }
    return g;
}

RecurrentGenerator make_recurrent_generator(int vocab_size, int embed_dim, int hidden_dim,
                                            std::uint64_t seed) {
    if (vocab_size < 2) {
        throw std::invalid_argument("make_recurrent_generator: vocab_size must be >= 2");
    }
    if (embed_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("make_recurrent_generator: dims must be >= 1");
    }
    RecurrentGenerator g;
    g.vocab_size = vocab_size;
    g.embed_dim = embed_dim;
    g.hidden_dim = hidden_dim;
    g.embed = Matrix(vocab_size, embed_dim);
    g.bos = Vector(static_cast<std::size_t>(embed_dim));
    g.w_xh = Matrix(hidden_dim, embed_dim);
    g.w_hh = Matrix(hidden_dim, hidden_dim);
    g.b_h = Vector(static_cast<std::size_t>(hidden_dim));
    g.h0 = Vector(static_cast<std::size_t>(hidden_dim));
    g.w_out = Matrix(vocab_size, hidden_dim);
    g.b_out = Vector(static_cast<std::size_t>(vocab_size));

    Rng rng(seed);
    auto fill = [&rng](Vector& v) {
        for (double& p : v) {
            p = rng.uniform(-0.1, 0.1);
        }
    };
    // Fill in flattened-parameter order so the draw sequence matches the
    // documented layout.
    fill(g.embed.data());
    fill(g.bos);
    fill(g.w_xh.data());
    fill(g.w_hh.data());
    fill(g.b_h);
    fill(g.h0);
    fill(g.w_out.data());
    fill(g.b_out);
    return g;
}

Vector next_step_dist(const GeneratorModel& gen, std::span<const ItemId> prefix) {
    validate_items(prefix, vocab_size(gen));
    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        const int position = static_cast<int>(prefix.size());
        const int table = table_index_at(*g, position);
        const int row = context_row(*g, prefix, position);
        return softmax(g->tables[static_cast<std::size_t>(table)].row(row));
    }
    const auto& g = std::get<RecurrentGenerator>(gen);
    Vector h(g.h0.begin(), g.h0.end());
    for (int t = 0; t <= static_cast<int>(prefix.size()); ++t) {
        h = rnn_step(g, rnn_input(g, prefix, t), h);
    }
    return softmax(rnn_logits(g, h));
}

SampleResult sample_sequence(const GeneratorModel& gen, int horizon, Rng& rng) {
    if (horizon < 1) {
        throw std::invalid_argument("sample_sequence: horizon must be >= 1");
    }
    SampleResult out;
    out.items.reserve(static_cast<std::size_t>(horizon));
    out.step_log_probs.reserve(static_cast<std::size_t>(horizon));

    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        for (int t = 0; t < horizon; ++t) {
            const int table = table_index_at(*g, t);
            const int row = context_row(*g, out.items, t);
            Vector logp = log_softmax(g->tables[static_cast<std::size_t>(table)].row(row));
            Vector dist(logp.size());
            for (std::size_t i = 0; i < logp.size(); ++i) {
                dist[i] = std::exp(logp[i]);
            }
            const int item = categorical_sample(dist, rng);
            out.items.push_back(item);
            out.step_log_probs.push_back(logp[static_cast<std::size_t>(item)]);
        }
        return out;
    }

    const auto& g = std::get<RecurrentGenerator>(gen);
    Vector h(g.h0.begin(), g.h0.end());
    for (int t = 0; t < horizon; ++t) {
        h = rnn_step(g, rnn_input(g, out.items, t), h);
        Vector logp = log_softmax(rnn_logits(g, h));
        Vector dist(logp.size());
        for (std::size_t i = 0; i < logp.size(); ++i) {
            dist[i] = std::exp(logp[i]);
        }
        const int item = categorical_sample(dist, rng);
        out.items.push_back(item);
        out.step_log_probs.push_back(logp[static_cast<std::size_t>(item)]);
    }
    return out;
}

double log_prob(const GeneratorModel& gen, std::span<const ItemId> seq) {
    validate_items(seq, vocab_size(gen));
    double total = 0.0;
    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
            const int table = table_index_at(*g, t);
            const int row = context_row(*g, seq, t);
            auto logits = g->tables[static_cast<std::size_t>(table)].row(row);
            total += logits[static_cast<std::size_t>(seq[static_cast<std::size_t>(t)])] -
                     log_sum_exp(logits);
        }
        return total;
    }
    const auto& g = std::get<RecurrentGenerator>(gen);
    Vector h(g.h0.begin(), g.h0.end());
    for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
        h = rnn_step(g, rnn_input(g, seq, t), h);
        Vector logits = rnn_logits(g, h);
        total += logits[static_cast<std::size_t>(seq[static_cast<std::size_t>(t)])] -
                 log_sum_exp(logits);
    }
    return total;
}

Vector grad_log_prob(const GeneratorModel& gen, std::span<const ItemId> seq) {
    const Vector ones(seq.size(), 1.0);
    return grad_log_prob_weighted(gen, seq, ones);
}

Vector grad_log_prob_weighted(const GeneratorModel& gen, std::span<const ItemId> seq,
                              std::span<const double> weights) {
    validate_items(seq, vocab_size(gen));
    if (weights.size() != seq.size()) {
        throw std::invalid_argument("grad_log_prob_weighted: weight count does not match length");
    }
    Vector grad(param_count(gen), 0.0);

    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        const int V = g->vocab_size;
        for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
            const double w = weights[static_cast<std::size_t>(t)];
            if (w == 0.0) {
                continue;
            }
            const int table = table_index_at(*g, t);
            const int row = context_row(*g, seq, t);
            Vector p = softmax(g->tables[static_cast<std::size_t>(table)].row(row));
            const std::size_t base = table_offset(*g, table) +
                                     static_cast<std::size_t>(row) * static_cast<std::size_t>(V);
            // d/d logits of log softmax: one-hot(observed) - p.
            for (int v = 0; v < V; ++v) {
                grad[base + static_cast<std::size_t>(v)] -= w * p[static_cast<std::size_t>(v)];
            }
            grad[base + static_cast<std::size_t>(seq[static_cast<std::size_t>(t)])] += w;
        }
        return grad;
    }

    // Backpropagation through time for the recurrent kind.
    const auto& g = std::get<RecurrentGenerator>(gen);
    const int T = static_cast<int>(seq.size());
    const int V = g.vocab_size;
    const int E = g.embed_dim;
    const int H = g.hidden_dim;
    const RecurrentOffsets off = recurrent_offsets(g);

    // Forward pass, keeping every hidden state and step distribution.
    std::vector<Vector> hs(static_cast<std::size_t>(T) + 1);
    hs[0] = Vector(g.h0.begin(), g.h0.end());
    std::vector<Vector> ps(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        hs[static_cast<std::size_t>(t) + 1] =
            rnn_step(g, rnn_input(g, seq, t), hs[static_cast<std::size_t>(t)]);
        ps[static_cast<std::size_t>(t)] = softmax(rnn_logits(g, hs[static_cast<std::size_t>(t) + 1]));
    }

    Vector carry(static_cast<std::size_t>(H), 0.0);  // d objective / d h_t from steps > t
    for (int t = T - 1; t >= 0; --t) {
        const Vector& h = hs[static_cast<std::size_t>(t) + 1];
        const Vector& h_prev = hs[static_cast<std::size_t>(t)];
        const Vector& p = ps[static_cast<std::size_t>(t)];
        const double w = weights[static_cast<std::size_t>(t)];

        Vector dlogit(static_cast<std::size_t>(V));
        for (int v = 0; v < V; ++v) {
            dlogit[static_cast<std::size_t>(v)] = -w * p[static_cast<std::size_t>(v)];
        }
        dlogit[static_cast<std::size_t>(seq[static_cast<std::size_t>(t)])] += w;

        Vector dh = carry;
        for (int v = 0; v < V; ++v) {
            const double dv = dlogit[static_cast<std::size_t>(v)];
            if (dv != 0.0) {
                grad[off.b_out + static_cast<std::size_t>(v)] += dv;
                auto w_row = g.w_out.row(v);
                const std::size_t wbase =
                    off.w_out + static_cast<std::size_t>(v) * static_cast<std::size_t>(H);
                for (int k = 0; k < H; ++k) {
                    grad[wbase + static_cast<std::size_t>(k)] += dv * h[static_cast<std::size_t>(k)];
                    dh[static_cast<std::size_t>(k)] += dv * w_row[static_cast<std::size_t>(k)];
                }
            }
        }

        Vector da(static_cast<std::size_t>(H));
        for (int k = 0; k < H; ++k) {
            const double hk = h[static_cast<std::size_t>(k)];
            da[static_cast<std::size_t>(k)] = dh[static_cast<std::size_t>(k)] * (1.0 - hk * hk);
        }

        std::span<const double> x = rnn_input(g, seq, t);
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

        // Input gradient flows to bos (t == 0) or the consumed embedding row.
        Vector dx = matvec_transpose(g.w_xh, da);
        const std::size_t x_base =
            t == 0 ? off.bos
                   : off.embed + static_cast<std::size_t>(seq[static_cast<std::size_t>(t - 1)]) *
                                     static_cast<std::size_t>(E);
        for (int j = 0; j < E; ++j) {
            grad[x_base + static_cast<std::size_t>(j)] += dx[static_cast<std::size_t>(j)];
        }

        carry = matvec_transpose(g.w_hh, da);
    }
    for (int k = 0; k < H; ++k) {
        grad[off.h0 + static_cast<std::size_t>(k)] += carry[static_cast<std::size_t>(k)];
    }
    return grad;
}

std::size_t param_count(const GeneratorModel& gen) {
    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        return tabular_param_count(*g);
    }
    return recurrent_offsets(std::get<RecurrentGenerator>(gen)).total;
}

Vector param_vector(const GeneratorModel& gen) {
    Vector out;
    out.reserve(param_count(gen));
    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        for (const Matrix& t : g->tables) {
            out.insert(out.end(), t.data().begin(), t.data().end());
        }
        return out;
    }
    const auto& g = std::get<RecurrentGenerator>(gen);
    out.insert(out.end(), g.embed.data().begin(), g.embed.data().end());
    out.insert(out.end(), g.bos.begin(), g.bos.end());
    out.insert(out.end(), g.w_xh.data().begin(), g.w_xh.data().end());
    out.insert(out.end(), g.w_hh.data().begin(), g.w_hh.data().end());
    out.insert(out.end(), g.b_h.begin(), g.b_h.end());
    out.insert(out.end(), g.h0.begin(), g.h0.end());
    out.insert(out.end(), g.w_out.data().begin(), g.w_out.data().end());
    out.insert(out.end(), g.b_out.begin(), g.b_out.end());
    return out;
}

void set_params(GeneratorModel& gen, std::span<const double> params) {
    if (params.size() != param_count(gen)) {
        throw std::invalid_argument("set_params: expected " + std::to_string(param_count(gen)) +
                                    " parameters, got " + std::to_string(params.size()));
    }
    std::size_t pos = 0;
    auto take = [&](Vector& dst) {
        std::copy(params.begin() + static_cast<std::ptrdiff_t>(pos),
                  params.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
        pos += dst.size();
    };
    if (auto* g = std::get_if<TabularGenerator>(&gen)) {
        for (Matrix& t : g->tables) {
            take(t.data());
        }
        return;
    }
    auto& g = std::get<RecurrentGenerator>(gen);
    take(g.embed.data());
    take(g.bos);
    take(g.w_xh.data());
    take(g.w_hh.data());
    take(g.b_h);
    take(g.h0);
    take(g.w_out.data());
    take(g.b_out);
}

void add_scaled_params(GeneratorModel& gen, std::span<const double> delta, double scale) {
    if (delta.size() != param_count(gen)) {
        throw std::invalid_argument("add_scaled_params: size mismatch");
    }
    std::size_t pos = 0;
    auto apply = [&](Vector& dst) {
        add_scaled(dst, delta.subspan(pos, dst.size()), scale);
        pos += dst.size();
    };
    if (auto* g = std::get_if<TabularGenerator>(&gen)) {
        for (Matrix& t : g->tables) {
            apply(t.data());
        }
        return;
    }
    auto& g = std::get<RecurrentGenerator>(gen);
    apply(g.embed.data());
    apply(g.bos);
    apply(g.w_xh.data());
    apply(g.w_hh.data());
    apply(g.b_h);
    apply(g.h0);
    apply(g.w_out.data());
    apply(g.b_out);
}

int vocab_size(const GeneratorModel& gen) {
    if (const auto* g = std::get_if<TabularGenerator>(&gen)) {
        return g->vocab_size;
    }
    return std::get<RecurrentGenerator>(gen).vocab_size;
}

}  // namespace ebsg
