#pragma once

// File formats: partition and network containers (versioned JSON), raw
// trajectory/symbol files, key=value configs, and CSV output helpers.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infopart/maps.hpp"
#include "infopart/neural.hpp"
#include "infopart/partitions.hpp"
#include "infopart/symbols.hpp"

namespace infopart {

inline constexpr int kPartitionFormatVersion = 1;
inline constexpr int kNetworkFormatVersion = 1;

std::string partition_to_json(const Partition& p);
Partition partition_from_json(const std::string& text);
void save_partition(const Partition& p, const std::filesystem::path& path);
Partition load_partition(const std::filesystem::path& path);

template <class T>
std::string network_to_json(const DenseNet<T>& net);
template <class T>
DenseNet<T> network_from_json(const std::string& text);

/// Little-endian float64 rows (n x d) at `path`, sidecar header at path + ".hdr".
void export_trajectory(const Trajectory& t, const std::filesystem::path& path);
Trajectory import_trajectory(const std::filesystem::path& path);

/// One symbol per byte.
void write_symbols(const SymbolSequence& s, const std::filesystem::path& path);
SymbolSequence read_symbols(const std::filesystem::path& path, int alphabet_size);

/// Ordered key=value settings. Lines starting with '#' are comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  /// Values from `overrides` win.
  void merge(const KeyValueConfig& overrides);

  std::string to_text() const;
  /// FNV-1a of to_text(), hex.
  std::string hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Map name and parameters as config keys (map, r | a, b [, kappa, eta]).
void map_to_config(const MapSpec& map, KeyValueConfig& config);
/// Missing parameters take the map's defaults.
MapSpec map_from_config(const KeyValueConfig& config);

/// "# infopart <version> config=<hash>" header line for CSV outputs.
std::string csv_header_comment(const std::string& config_hash);

/// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Round-trip formatting for doubles in text outputs.
std::string format_double(double v);

}  // namespace infopart
