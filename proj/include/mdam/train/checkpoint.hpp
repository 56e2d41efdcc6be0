#pragma once

#include <iosfwd>
#include <string>

#include "mdam/train/trainer.hpp"

namespace mdam::train {

/// Text manifest followed by one little-endian f64 blob:
///
///   MDAM1
///   meta <key> <value>            (config, counters, optimizer scalars)
///   tensor <name> <rows> <cols> f64 <byte offset>
///   end
///   <blob>
///
/// Holds model and baseline weights with their running BN statistics,
/// the Adam moments and the loss history; reals round-trip bit-exactly.
void write_checkpoint(std::ostream& out, const TrainerState& state);
TrainerState read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const TrainerState& state);
TrainerState load_checkpoint(const std::string& path);

}  // namespace mdam::train
