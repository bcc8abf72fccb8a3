#include "longattn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "longattn/errors.hpp"
#include "longattn/kernels.hpp"
#include "longattn/model.hpp"

namespace longattn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_field(const std::string& text, const std::string& column, std::size_t line_no) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !in.eof()) {
    throw ConfigError("scaling csv line " + std::to_string(line_no) + ": bad " + column + " '" + text + "'");
  }
  return value;
}

const char* kColumns[] = {"variant",  "L",         "b",          "g",         "staggered",  "wall_ms",
                          "mac_count", "score_elems", "wall_ratio", "mac_ratio", "score_ratio"};

}  // namespace

std::vector<ScalingRow> run_scaling(const ScalingGrid& grid) {
  std::vector<ScalingRow> rows;
  Rng rng(grid.seed);
  for (const auto& base : grid.specs) {
    for (std::size_t L : grid.lengths) {
      ModelConfig cfg;
      cfg.vocab_size = 64;
      cfg.d_model = grid.d_model;
      cfg.num_heads = grid.num_heads;
      cfg.d_ff = grid.d_ff;
      cfg.enc_layers = 1;
      cfg.dec_layers = 1;
      cfg.cross_attn_layers = {0};
      cfg.max_input_len = L;
      cfg.attention.variant = base.variant;
      cfg.attention.block_size = base.block_size;
      cfg.attention.num_global = base.variant == AttentionVariant::GlobalLocal ? base.num_global : 0;
      cfg.attention.staggered = base.staggered;
      cfg.validate();
      const auto params = init_params(cfg, grid.seed);
      std::vector<std::int64_t> ids(L);
      for (auto& t : ids) t = 4 + static_cast<std::int64_t>(rng.below(cfg.vocab_size - 4));

      NoGradScope no_grad;
      for (std::size_t w = 0; w < grid.warmups; ++w) encoder_forward(cfg, params, ids);
      std::vector<double> times;
      std::uint64_t macs = 0;
      for (std::size_t r = 0; r < std::max<std::size_t>(grid.repeats, 1); ++r) {
        kernels::reset_gemm_mac_count();
        reset_attention_counters();
        const auto start = std::chrono::steady_clock::now();
        encoder_forward(cfg, params, ids);
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        const auto c = attention_counters();
        macs = kernels::gemm_mac_count() + c.macs + c.value_macs;
      }
      std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());

      ScalingRow row;
      row.variant = to_string(cfg.attention.variant);
      row.seq_len = L;
      row.block_size = cfg.attention.block_size;
      row.num_global = cfg.attention.num_global;
      row.staggered = cfg.attention.staggered;
      row.wall_ms = times[times.size() / 2];
      row.mac_count = macs;
      row.score_elems = attention_cost(cfg.attention_spec(), L, 0).score_mem_elems;
      rows.push_back(row);
    }
  }
  normalize_rows(rows, grid.baseline);
  return rows;
}

void normalize_rows(std::vector<ScalingRow>& rows, const std::string& baseline) {
  std::map<std::size_t, ScalingRow> copies;
  for (const auto& r : rows) {
    if (r.variant == baseline && !copies.contains(r.seq_len)) copies[r.seq_len] = r;
  }
  for (auto& r : rows) {
    const auto it = copies.find(r.seq_len);
    if (it == copies.end()) {
      r.wall_ratio = r.mac_ratio = r.score_ratio = 0.0;
      continue;
    }
    const auto& b = it->second;
    r.wall_ratio = b.wall_ms > 0 ? r.wall_ms / b.wall_ms : 0.0;
    r.mac_ratio = b.mac_count > 0 ? static_cast<double>(r.mac_count) / static_cast<double>(b.mac_count) : 0.0;
    r.score_ratio = b.score_elems > 0 ? static_cast<double>(r.score_elems) / static_cast<double>(b.score_elems) : 0.0;
  }
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out) {
  for (std::size_t i = 0; i < std::size(kColumns); ++i) out << (i ? "," : "") << kColumns[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.variant << ',' << r.seq_len << ',' << r.block_size << ',' << r.num_global << ',' << (r.staggered ? 1 : 0)
        << ',' << r.wall_ms << ',' << r.mac_count << ',' << r.score_elems << ',' << r.wall_ratio << ',' << r.mac_ratio
        << ',' << r.score_ratio << '\n';
  }
}

std::vector<ScalingRow> read_scaling_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("scaling csv: empty input");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* c : {"variant", "L", "b", "g", "mac_count"}) {
    if (!col.contains(c)) throw ConfigError(std::string("scaling csv: missing column ") + c);
  }
  auto opt = [&](const std::vector<std::string>& f, const char* name) -> const std::string* {
    const auto it = col.find(name);
    return it == col.end() ? nullptr : &f[it->second];
  };

  std::vector<ScalingRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ConfigError("scaling csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(f.size()));
    }
    ScalingRow r;
    r.variant = f[col["variant"]];
    parse_attention_variant(r.variant);
    r.seq_len = parse_field<std::size_t>(f[col["L"]], "L", line_no);
    r.block_size = parse_field<std::size_t>(f[col["b"]], "b", line_no);
    r.num_global = parse_field<std::size_t>(f[col["g"]], "g", line_no);
    r.mac_count = parse_field<std::uint64_t>(f[col["mac_count"]], "mac_count", line_no);
    if (const auto* s = opt(f, "staggered")) r.staggered = parse_field<int>(*s, "staggered", line_no) != 0;
    if (const auto* s = opt(f, "wall_ms")) r.wall_ms = parse_field<double>(*s, "wall_ms", line_no);
    if (const auto* s = opt(f, "score_elems")) r.score_elems = parse_field<std::uint64_t>(*s, "score_elems", line_no);
    if (const auto* s = opt(f, "wall_ratio")) r.wall_ratio = parse_field<double>(*s, "wall_ratio", line_no);
    if (const auto* s = opt(f, "mac_ratio")) r.mac_ratio = parse_field<double>(*s, "mac_ratio", line_no);
    if (const auto* s = opt(f, "score_ratio")) r.score_ratio = parse_field<double>(*s, "score_ratio", line_no);
    rows.push_back(r);
  }
  return rows;
}

OrderingReport ordering_check(const std::vector<ScalingRow>& rows) {
  struct Group {
    const ScalingRow* local = nullptr;
    const ScalingRow* global = nullptr;
    const ScalingRow* full = nullptr;
  };
  // full attention ignores the block size, so it joins every block group of its length
  std::map<std::pair<std::size_t, std::size_t>, Group> groups;
  std::map<std::size_t, const ScalingRow*> full_by_len;
  for (const auto& r : rows) {
    const auto v = parse_attention_variant(r.variant);
    if (v == AttentionVariant::Full) {
      if (!full_by_len.contains(r.seq_len)) full_by_len[r.seq_len] = &r;
      continue;
    }
    auto& g = groups[{r.seq_len, r.block_size}];
    auto& slot = v == AttentionVariant::BlockLocal ? g.local : g.global;
    if (!slot) slot = &r;
  }

  OrderingReport report;
  for (auto& [key, g] : groups) {
    const auto [L, b] = key;
    if (const auto it = full_by_len.find(L); it != full_by_len.end()) g.full = it->second;
    const auto where = "L=" + std::to_string(L) + " b=" + std::to_string(b) + ": ";
    bool checked = false;
    if (g.local && g.full && g.local->mac_count > g.full->mac_count) {
      report.violations.push_back(where + "block_local above full");
    }
    checked = g.local && g.full;
    if (L >= 8 * b) {
      if (g.local && g.global && g.local->mac_count > g.global->mac_count) {
        report.violations.push_back(where + "block_local above global_local");
      }
      if (g.global && g.full && g.global->mac_count >= g.full->mac_count) {
        report.violations.push_back(where + "global_local not below full");
      }
      checked = checked || (g.local && g.global) || (g.global && g.full);
    }
    report.groups_checked += checked;
  }
  report.pass = report.violations.empty();
  return report;
}

OrderingReport ordering_check(std::istream& csv) { return ordering_check(read_scaling_csv(csv)); }

}  // namespace longattn
