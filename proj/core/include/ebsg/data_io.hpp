#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/eval.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/oracle.hpp"

namespace ebsg {

/// Bumped when the checkpoint schema changes; loads refuse other versions.
inline constexpr int kCheckpointFormatVersion = 1;

/// Checkpoints are versioned JSON text with every parameter rendered as a
/// hexadecimal float literal, so round trips are bit-exact and files diff
/// cleanly. Writes go to a temporary file in the target directory followed
/// by an atomic rename. Loads throw CheckpointFormatError (unreadable or
/// malformed), CheckpointVersionError, or CheckpointKindError (not the
/// requested model family).
void save_generator_checkpoint(const std::string& path, const GeneratorModel& model,
                               const Vocabulary& vocab, std::uint64_t seed);

struct LoadedGenerator {
    GeneratorModel model;
    Vocabulary vocab;
    std::uint64_t seed = 0;
};
LoadedGenerator load_generator_checkpoint(const std::string& path);

void save_energy_checkpoint(const std::string& path, const EnergyModel& model,
                            const Vocabulary& vocab, std::uint64_t seed);

struct LoadedEnergy {
    EnergyModel model;
    Vocabulary vocab;
    std::uint64_t seed = 0;
};
LoadedEnergy load_energy_checkpoint(const std::string& path);

void save_oracle_checkpoint(const std::string& path, const MarkovOracle& oracle);
MarkovOracle load_oracle_checkpoint(const std::string& path);

/// Fixed-length windows cut from per-user session logs.
struct SessionWindowing {
    int horizon = 8;
    int stride = 1;  ///< window start spacing within a session
};

/// Reads a session CSV (header exactly `user_id,timestamp,item_id`), groups
/// rows by user, orders each user's events by integer timestamp (stable, so
/// ties keep file order), and cuts sliding windows of length horizon.
/// Sessions shorter than the horizon contribute nothing. Item ids are
/// assigned by first appearance in the file, so re-ingesting a file is
/// deterministic. Throws SessionFormatError with the 1-based line number on
/// a malformed row, std::invalid_argument when no window survives, and
/// std::runtime_error when the file cannot be opened.
DemoSet ingest_sessions(const std::string& path, const SessionWindowing& windowing);

/// Demo sequences as a session CSV (one synthetic user per sequence,
/// timestamps 0..T-1), the inverse of ingest_sessions for generated data.
void write_sessions_csv(const std::string& path, const DemoSet& demos);

/// Metric history as CSV with the fixed header
/// `iteration,d_loss,g_objective,mean_fake_energy,mean_real_energy,entropy_estimate,oracle_nll,feature_gap`.
/// Missing optional metrics are empty cells. Doubles are printed with 17
/// significant digits, so equal runs produce byte-identical files.
void write_metrics_csv(const std::string& path, std::span<const MetricRow> rows);

/// Demos re-indexed through a target vocabulary containing the same tokens
/// (used to align ingested data with a checkpoint's id assignment). Throws
/// std::out_of_range on a token the target lacks.
DemoSet remap_demos(const DemoSet& demos, const Vocabulary& target);

/// Writes text to path via a temporary file and rename, so readers never see
/// a partial file.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace ebsg
