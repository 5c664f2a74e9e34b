#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "detcal/binning.hpp"
#include "detcal/io.hpp"
#include "detcal/records.hpp"

namespace detcal::cli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path);

// Writes through a sibling temp file and renames it into place.
void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer);

class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  void set(const std::string& key, nlohmann::json value) { config_[key] = std::move(value); }
  void input(const fs::path& path) { inputs_.push_back(path); }
  void output(const fs::path& path) { outputs_.push_back(path); }

  nlohmann::json to_json() const;
  // Written next to `primary` as <primary>.manifest.json.
  void write_for(const fs::path& primary) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

enum class Split { all, fit, holdout };

Split parse_split(std::string_view name);

// Seeded 50/50 partition of the distinct ids; true marks the fit half.
std::vector<bool> fit_half(std::span<const std::string> ids, std::uint64_t seed);

using Records = std::variant<std::vector<DetectionRecord>, std::vector<PixelRecord>>;

Records load_records(const fs::path& path, Task task, const ReadOptions& opts, ReadStats* stats);
std::size_t record_count(const Records& records);
std::vector<std::string> group_ids(const Records& records);
void write_records(std::ostream& out, const Records& records);

std::vector<std::size_t> select_indices(const Records& records, Split split, std::uint64_t seed,
                                        const std::set<int>& classes);

std::vector<double> read_posteriors(const fs::path& path, std::size_t expected);
void write_posteriors(std::ostream& out, std::span<const double> posteriors);

}  // namespace detcal::cli
