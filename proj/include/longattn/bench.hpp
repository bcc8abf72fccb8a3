#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "longattn/attention.hpp"

namespace longattn {

struct ScalingRow {
  std::string variant;
  std::size_t seq_len = 0;
  std::size_t block_size = 0;
  std::size_t num_global = 0;
  bool staggered = false;
  double wall_ms = 0.0;         // median over repeats
  std::uint64_t mac_count = 0;  // dense GEMMs + q.k + probability-weighted values
  std::uint64_t score_elems = 0;
  // relative to the baseline row of the same length (0 when it is missing)
  double wall_ratio = 0.0;
  double mac_ratio = 0.0;
  double score_ratio = 0.0;
};

/// One encoder layer (attention + FFN) of the given width runs forward for
/// every (spec, length) pair. Only variant, block_size, num_global and
/// staggered are read from the specs.
struct ScalingGrid {
  std::vector<AttentionSpec> specs;
  std::vector<std::size_t> lengths;
  std::size_t repeats = 3;
  std::size_t warmups = 2;
  std::size_t d_model = 256;
  std::size_t num_heads = 4;
  std::size_t d_ff = 1024;
  std::uint64_t seed = 0;
  std::string baseline = "block_local";
};

std::vector<ScalingRow> run_scaling(const ScalingGrid& grid);

/// Fills the ratio columns against the first row of `baseline` variant with
/// the same length.
void normalize_rows(std::vector<ScalingRow>& rows, const std::string& baseline);

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out);
/// ConfigError on a missing column or an unparsable field.
std::vector<ScalingRow> read_scaling_csv(std::istream& in);

struct OrderingReport {
  bool pass = true;
  std::size_t groups_checked = 0;
  std::vector<std::string> violations;
};

/// Per (length, block size) group holding the variants: mac_count of
/// block_local <= global_local < full once L >= 8b, and block_local <= full
/// below that.
OrderingReport ordering_check(const std::vector<ScalingRow>& rows);
OrderingReport ordering_check(std::istream& csv);

}  // namespace longattn
