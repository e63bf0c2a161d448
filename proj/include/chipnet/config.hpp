#pragma once

#include <charconv>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "chipnet/common.hpp"
#include "chipnet/fixedpoint.hpp"
#include "chipnet/postprocess.hpp"
#include "chipnet/spherical.hpp"

namespace chipnet {

/// Minimal TOML subset: `[section]` headers, `key = value` pairs with
/// integer, float, boolean and double-quoted string values, `#` comments.
/// Keys are flattened to "section.key".
class TomlTable {
 public:
  static TomlTable parse(std::string_view text) {
    TomlTable table;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t eol = text.find('\n', pos);
      std::string_view line =
          text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
      pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
      ++line_no;
      if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
        line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw CsvParseError(line_no, "unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw CsvParseError(line_no, "expected key = value");
      std::string key(trim(line.substr(0, eq)));
      if (key.empty()) throw CsvParseError(line_no, "empty key");
      if (!section.empty()) key = section + "." + key;
      values_of(table)[key] = parse_value(trim(line.substr(eq + 1)), line_no);
    }
    return table;
  }

  std::optional<double> number(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.kind == Value::Kind::kString) return std::nullopt;
    return it->second.num;
  }
  std::optional<bool> boolean(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.kind != Value::Kind::kBool) return std::nullopt;
    return it->second.num != 0.0;
  }
  std::optional<std::string> string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.kind != Value::Kind::kString) return std::nullopt;
    return it->second.str;
  }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }

 private:
  struct Value {
    enum class Kind { kNumber, kBool, kString } kind = Kind::kNumber;
    double num = 0.0;
    std::string str;
  };

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return s;
  }

  static Value parse_value(std::string_view raw, std::size_t line_no) {
    Value v;
    if (raw.empty()) throw CsvParseError(line_no, "empty value");
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"')
        throw CsvParseError(line_no, "unterminated string");
      v.kind = Value::Kind::kString;
      v.str = std::string(raw.substr(1, raw.size() - 2));
      return v;
    }
    if (raw == "true" || raw == "false") {
      v.kind = Value::Kind::kBool;
      v.num = raw == "true" ? 1.0 : 0.0;
      return v;
    }
    double num = 0.0;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), num);
    if (ec != std::errc{} || ptr != raw.data() + raw.size())
      throw CsvParseError(line_no, "cannot parse value '" + std::string(raw) + "'");
    v.num = num;
    return v;
  }

  static std::map<std::string, Value>& values_of(TomlTable& t) { return t.values_; }

  std::map<std::string, Value> values_;
};

/// All pipeline defaults in one place, overridable from a TOML file and then
/// from CLI flags. Defaults reproduce the published setup: 180x64x14 input,
/// 18-bit formats, 0.05 m grid map.
struct PipelineConfig {
  GridConfig grid;
  GridMapConfig map;
  QFormat weight_format = default_weight_format();
  QFormat act_format = default_activation_format();
  double threshold = 0.5;
  int connectivity = 4;
  int channels = 64;
  int num_blocks = 10;
  double clock_mhz = 350.0;
  std::int64_t swap_overhead_cycles = 0;

  void apply(const TomlTable& toml) {
    const auto num = [&](const char* key, auto& field) {
      if (const auto v = toml.number(key)) field = static_cast<std::decay_t<decltype(field)>>(*v);
    };
    num("grid.azimuth_min", grid.azimuth_min_deg);
    num("grid.azimuth_max", grid.azimuth_max_deg);
    num("grid.azimuth_bin", grid.azimuth_bin_deg);
    num("grid.rows", grid.rows);
    num("grid.elevation_min", grid.elevation_min_deg);
    num("grid.elevation_max", grid.elevation_max_deg);
    num("map.x_min", map.x_min);
    num("map.x_max", map.x_max);
    num("map.y_min", map.y_min);
    num("map.y_max", map.y_max);
    num("map.resolution", map.resolution);
    num("quant.weight_bits", weight_format.total_bits);
    num("quant.weight_frac", weight_format.fraction_bits);
    num("quant.act_bits", act_format.total_bits);
    num("quant.act_frac", act_format.fraction_bits);
    num("post.threshold", threshold);
    num("post.connectivity", connectivity);
    num("net.channels", channels);
    num("net.blocks", num_blocks);
    num("sim.clock_mhz", clock_mhz);
    num("sim.swap_overhead_cycles", swap_overhead_cycles);
  }

  void validate() const {
    grid.validate();
    map.validate();
    weight_format.validate();
    act_format.validate();
    if (!(threshold > 0.0 && threshold < 1.0))
      throw DomainError("config: threshold must be in (0, 1)");
    if (connectivity != 4 && connectivity != 8)
      throw DomainError("config: connectivity must be 4 or 8");
    if (channels <= 0 || num_blocks < 0) throw DomainError("config: bad network topology");
    if (clock_mhz <= 0.0) throw DomainError("config: clock must be positive");
  }
};

}  // namespace chipnet
