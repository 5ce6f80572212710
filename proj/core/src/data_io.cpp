#include "ebsg/data_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ebsg/errors.hpp"
#include "json.hpp"

namespace ebsg {

namespace {

using nlohmann::json;

std::string to_hex_literal(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double from_hex_literal(const std::string& s) {
    if (s.empty()) {
        throw CheckpointFormatError("empty numeric literal");
    }
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        throw CheckpointFormatError("bad numeric literal \"" + s + "\"");
    }
    return v;
}

json params_to_json(std::span<const double> params) {
    json arr = json::array();
    for (double p : params) {
        arr.push_back(to_hex_literal(p));
    }
    return arr;
}

Vector params_from_json(const json& arr) {
    if (!arr.is_array()) {
        throw CheckpointFormatError("params field is not an array");
    }
    Vector out;
    out.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_string()) {
            throw CheckpointFormatError("params entry is not a string literal");
        }
        out.push_back(from_hex_literal(v.get<std::string>()));
    }
    return out;
}

json vocab_to_json(const Vocabulary& vocab) {
    json arr = json::array();
    for (const std::string& token : vocab.tokens()) {
        arr.push_back(token);
    }
    return arr;
}

Vocabulary vocab_from_json(const json& arr) {
    if (!arr.is_array()) {
        throw CheckpointFormatError("vocab field is not an array");
    }
    std::vector<std::string> tokens;
    tokens.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_string()) {
            throw CheckpointFormatError("vocab entry is not a string");
        }
        tokens.push_back(v.get<std::string>());
    }
    try {
        return Vocabulary(std::move(tokens));
    } catch (const std::invalid_argument& err) {
        throw CheckpointFormatError(err.what());
    }
}

/// Parses, checks the version, and returns the document. All json exceptions
/// are translated to checkpoint errors here.
json read_checkpoint_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CheckpointFormatError("cannot open checkpoint file " + path);
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& err) {
        throw CheckpointFormatError("checkpoint " + path + " is not parseable: " + err.what());
    }
    if (!doc.is_object() || !doc.contains("format_version")) {
        throw CheckpointFormatError("checkpoint " + path + " has no format_version field");
    }
    if (!doc["format_version"].is_number_integer() ||
        doc["format_version"].get<int>() != kCheckpointFormatVersion) {
        throw CheckpointVersionError("checkpoint " + path + " has format_version " +
                                     doc["format_version"].dump() + ", this build reads " +
                                     std::to_string(kCheckpointFormatVersion));
    }
    if (!doc.contains("kind") || !doc["kind"].is_string()) {
        throw CheckpointFormatError("checkpoint " + path + " has no kind tag");
    }
    return doc;
}

template <typename Fn>
auto translate_json_errors(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const CheckpointError&) {
        throw;
    } catch (const json::exception& err) {
        throw CheckpointFormatError("checkpoint " + path + " is malformed: " + err.what());
    } catch (const std::invalid_argument& err) {
        throw CheckpointFormatError("checkpoint " + path + " is malformed: " +
                                    std::string(err.what()));
    }
}

void write_checkpoint_file(const std::string& path, const json& doc) {
    atomic_write_text(path, doc.dump(2) + "\n");
}

std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct SessionEvent {
    std::int64_t timestamp;
    ItemId item;
};

}  // namespace

void save_generator_checkpoint(const std::string& path, const GeneratorModel& model,
                               const Vocabulary& vocab, std::uint64_t seed) {
    json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["vocab"] = vocab_to_json(vocab);
    doc["seed"] = seed;
    doc["params"] = params_to_json(param_vector(model));
    if (const auto* tab = std::get_if<TabularGenerator>(&model)) {
        doc["kind"] = "generator/tabular";
        doc["order"] = tab->order;
        doc["stationary"] = tab->stationary;
        doc["horizon"] = tab->horizon;
    } else {
        const auto& rec = std::get<RecurrentGenerator>(model);
        doc["kind"] = "generator/recurrent";
        doc["embed_dim"] = rec.embed_dim;
        doc["hidden_dim"] = rec.hidden_dim;
    }
    write_checkpoint_file(path, doc);
}

LoadedGenerator load_generator_checkpoint(const std::string& path) {
    const json doc = read_checkpoint_file(path);
    return translate_json_errors(path, [&]() -> LoadedGenerator {
        const std::string kind = doc["kind"].get<std::string>();
        LoadedGenerator out;
        out.vocab = vocab_from_json(doc.at("vocab"));
        out.seed = doc.at("seed").get<std::uint64_t>();
        const Vector params = params_from_json(doc.at("params"));
        if (kind == "generator/tabular") {
            out.model = make_tabular_generator(out.vocab.size(), doc.at("order").get<int>(),
                                               doc.at("horizon").get<int>());
            const bool stationary = doc.at("stationary").get<bool>();
            if (stationary != std::get<TabularGenerator>(out.model).stationary) {
                throw CheckpointFormatError("checkpoint " + path +
                                            ": stationary flag contradicts horizon");
            }
        } else if (kind == "generator/recurrent") {
            out.model = make_recurrent_generator(out.vocab.size(), doc.at("embed_dim").get<int>(),
                                                 doc.at("hidden_dim").get<int>(), out.seed);
        } else {
            throw CheckpointKindError("checkpoint " + path + " holds kind \"" + kind +
                                      "\", not a generator");
        }
        if (params.size() != param_count(out.model)) {
            throw CheckpointFormatError("checkpoint " + path + " has " +
                                        std::to_string(params.size()) + " params, model needs " +
                                        std::to_string(param_count(out.model)));
        }
        set_params(out.model, params);
        return out;
    });
}

void save_energy_checkpoint(const std::string& path, const EnergyModel& model,
                            const Vocabulary& vocab, std::uint64_t seed) {
    json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["vocab"] = vocab_to_json(vocab);
    doc["seed"] = seed;
    doc["params"] = params_to_json(param_vector(model));
    if (std::holds_alternative<LinearEnergy>(model)) {
        doc["kind"] = "energy/linear";
    } else {
        const auto& rec = std::get<RecurrentEnergy>(model);
        doc["kind"] = "energy/recurrent";
        doc["embed_dim"] = rec.embed_dim;
        doc["hidden_dim"] = rec.hidden_dim;
    }
    write_checkpoint_file(path, doc);
}

LoadedEnergy load_energy_checkpoint(const std::string& path) {
    const json doc = read_checkpoint_file(path);
    return translate_json_errors(path, [&]() -> LoadedEnergy {
        const std::string kind = doc["kind"].get<std::string>();
        LoadedEnergy out;
        out.vocab = vocab_from_json(doc.at("vocab"));
        out.seed = doc.at("seed").get<std::uint64_t>();
        const Vector params = params_from_json(doc.at("params"));
        if (kind == "energy/linear") {
            out.model = make_linear_energy(out.vocab.size());
        } else if (kind == "energy/recurrent") {
            out.model = make_recurrent_energy(out.vocab.size(), doc.at("embed_dim").get<int>(),
                                              doc.at("hidden_dim").get<int>(), out.seed);
        } else {
            throw CheckpointKindError("checkpoint " + path + " holds kind \"" + kind +
                                      "\", not an energy model");
        }
        if (params.size() != param_count(out.model)) {
            throw CheckpointFormatError("checkpoint " + path + " has " +
                                        std::to_string(params.size()) + " params, model needs " +
                                        std::to_string(param_count(out.model)));
        }
        set_params(out.model, params);
        return out;
    });
}

void save_oracle_checkpoint(const std::string& path, const MarkovOracle& oracle) {
    json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["kind"] = "markov-oracle";
    doc["vocab"] = vocab_to_json(oracle.vocab);
    doc["seed"] = oracle.seed;
    doc["initial"] = params_to_json(oracle.initial);
    doc["transition"] = params_to_json(oracle.transition.data());
    write_checkpoint_file(path, doc);
}

MarkovOracle load_oracle_checkpoint(const std::string& path) {
    const json doc = read_checkpoint_file(path);
    return translate_json_errors(path, [&]() -> MarkovOracle {
        const std::string kind = doc["kind"].get<std::string>();
        if (kind != "markov-oracle") {
            throw CheckpointKindError("checkpoint " + path + " holds kind \"" + kind +
                                      "\", not a markov-oracle");
        }
        MarkovOracle oracle;
        oracle.vocab = vocab_from_json(doc.at("vocab"));
        oracle.seed = doc.at("seed").get<std::uint64_t>();
        oracle.initial = params_from_json(doc.at("initial"));
        const Vector trans = params_from_json(doc.at("transition"));
        const int V = oracle.vocab.size();
        if (static_cast<int>(oracle.initial.size()) != V ||
            trans.size() != static_cast<std::size_t>(V) * static_cast<std::size_t>(V)) {
            throw CheckpointFormatError("checkpoint " + path +
                                        " oracle tables do not match the vocabulary size");
        }
        oracle.transition = Matrix(V, V);
        oracle.transition.data() = trans;
        return oracle;
    });
}

DemoSet ingest_sessions(const std::string& path, const SessionWindowing& windowing) {
    if (windowing.horizon < 1) {
        throw std::invalid_argument("ingest_sessions: horizon must be >= 1");
    }
    if (windowing.stride < 1) {
        throw std::invalid_argument("ingest_sessions: stride must be >= 1");
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("ingest_sessions: cannot open " + path);
    }

    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) {
        throw SessionFormatError(1, "empty file, expected header user_id,timestamp,item_id");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "user_id,timestamp,item_id") {
        throw SessionFormatError(line_no, "header must be exactly user_id,timestamp,item_id");
    }

    std::vector<std::string> tokens;                 // id -> token, first-appearance order
    std::map<std::string, ItemId> token_ids;
    std::vector<std::string> user_order;             // first-appearance order
    std::map<std::string, std::vector<SessionEvent>> users;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos) {
            throw SessionFormatError(line_no, "expected exactly 3 comma-separated fields");
        }
        const std::string user = line.substr(0, c1);
        const std::string ts_text = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string item = line.substr(c2 + 1);
        if (user.empty() || item.empty()) {
            throw SessionFormatError(line_no, "user_id and item_id must be non-empty");
        }
        std::int64_t ts = 0;
        try {
            std::size_t used = 0;
            ts = std::stoll(ts_text, &used);
            if (used != ts_text.size()) {
                throw std::invalid_argument(ts_text);
            }
        } catch (const std::exception&) {
            throw SessionFormatError(line_no, "timestamp \"" + ts_text + "\" is not an integer");
        }

        auto [it, inserted] = token_ids.emplace(item, static_cast<ItemId>(tokens.size()));
        if (inserted) {
            tokens.push_back(item);
        }
        auto [user_it, user_inserted] = users.emplace(user, std::vector<SessionEvent>{});
        if (user_inserted) {
            user_order.push_back(user);
        }
        user_it->second.push_back({ts, it->second});
    }

    std::vector<Sequence> sequences;
    for (const std::string& user : user_order) {
        std::vector<SessionEvent>& events = users[user];
        std::stable_sort(events.begin(), events.end(),
                         [](const SessionEvent& a, const SessionEvent& b) {
                             return a.timestamp < b.timestamp;
                         });
        const int n = static_cast<int>(events.size());
        for (int start = 0; start + windowing.horizon <= n; start += windowing.stride) {
            Sequence s;
            s.reserve(static_cast<std::size_t>(windowing.horizon));
            for (int t = 0; t < windowing.horizon; ++t) {
                s.push_back(events[static_cast<std::size_t>(start + t)].item);
            }
            sequences.push_back(std::move(s));
        }
    }
    if (sequences.empty()) {
        throw std::invalid_argument("ingest_sessions: no session in " + path +
                                    " is long enough for horizon " +
                                    std::to_string(windowing.horizon));
    }
    return make_demo_set(Vocabulary(std::move(tokens)), windowing.horizon, std::move(sequences));
}

void write_sessions_csv(const std::string& path, const DemoSet& demos) {
    std::ostringstream out;
    out << "user_id,timestamp,item_id\n";
    for (std::size_t i = 0; i < demos.sequences.size(); ++i) {
        for (std::size_t t = 0; t < demos.sequences[i].size(); ++t) {
            out << "u" << i << "," << t << ","
                << demos.vocab.token(demos.sequences[i][t]) << "\n";
        }
    }
    atomic_write_text(path, out.str());
}

void write_metrics_csv(const std::string& path, std::span<const MetricRow> rows) {
    std::ostringstream out;
    out << "iteration,d_loss,g_objective,mean_fake_energy,mean_real_energy,entropy_estimate,"
           "oracle_nll,feature_gap\n";
    for (const MetricRow& row : rows) {
        out << row.iteration << ',' << csv_double(row.d_loss) << ',' << csv_double(row.g_objective)
            << ',' << csv_double(row.mean_fake_energy) << ',' << csv_double(row.mean_real_energy)
            << ',' << csv_double(row.entropy_estimate) << ',';
        if (row.oracle_nll.has_value()) {
            out << csv_double(*row.oracle_nll);
        }
        out << ',';
        if (row.feature_gap.has_value()) {
            out << csv_double(*row.feature_gap);
        }
        out << '\n';
    }
    atomic_write_text(path, out.str());
}

DemoSet remap_demos(const DemoSet& demos, const Vocabulary& target) {
    std::vector<ItemId> mapping(static_cast<std::size_t>(demos.vocab.size()));
    for (int i = 0; i < demos.vocab.size(); ++i) {
        mapping[static_cast<std::size_t>(i)] = target.id(demos.vocab.token(i));
    }
    std::vector<Sequence> sequences;
    sequences.reserve(demos.sequences.size());
    for (const Sequence& s : demos.sequences) {
        Sequence mapped;
        mapped.reserve(s.size());
        for (ItemId id : s) {
            mapped.push_back(mapping[static_cast<std::size_t>(id)]);
        }
        sequences.push_back(std::move(mapped));
    }
    return make_demo_set(target, demos.horizon, std::move(sequences));
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("write to " + tmp.string() + " failed");
        }
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace ebsg
