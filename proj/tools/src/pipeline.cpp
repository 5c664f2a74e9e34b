#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "detcal/error.hpp"
#include "detcal/version.hpp"

namespace detcal::cli {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    writer(out);
    out.flush();
    if (!out) {
      fs::remove(tmp);
      throw Error("write failed for '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

nlohmann::json Manifest::to_json() const {
  auto files = [](const std::vector<fs::path>& paths) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : paths) {
      out.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    }
    return out;
  };
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return {{"tool", "detcal"},
          {"version", std::string(kVersion)},
          {"command", command_},
          {"config", config_},
          {"inputs", files(inputs_)},
          {"outputs", files(outputs_)},
          {"created_utc", stamp}};
}

void Manifest::write_for(const fs::path& primary) const {
  fs::path target = primary;
  target += ".manifest.json";
  const auto j = to_json();
  write_atomic(target, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

Split parse_split(std::string_view name) {
  if (name == "all") return Split::all;
  if (name == "fit") return Split::fit;
  if (name == "holdout") return Split::holdout;
  throw ValidationError("unknown split '" + std::string(name) + "' (expected all, fit or holdout)");
}

std::vector<bool> fit_half(std::span<const std::string> ids, std::uint64_t seed) {
  std::map<std::string, std::size_t> order;
  std::vector<std::string> distinct;
  for (const auto& id : ids) {
    if (order.emplace(id, distinct.size()).second) distinct.push_back(id);
  }
  std::vector<std::size_t> perm(distinct.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  // Fisher-Yates with an explicit draw so the result does not depend on the
  // standard library's shuffle implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<bool> in_fit_group(distinct.size(), false);
  for (std::size_t k = 0; k < (distinct.size() + 1) / 2; ++k) in_fit_group[perm[k]] = true;
  std::vector<bool> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = in_fit_group[order.at(ids[i])];
  return out;
}

Records load_records(const fs::path& path, Task task, const ReadOptions& opts, ReadStats* stats) {
  if (task == Task::detection) return read_detections(path, opts, stats);
  return read_pixels(path, stats);
}

std::size_t record_count(const Records& records) {
  return std::visit([](const auto& v) { return v.size(); }, records);
}

std::vector<std::string> group_ids(const Records& records) {
  std::vector<std::string> ids;
  if (const auto* d = std::get_if<std::vector<DetectionRecord>>(&records)) {
    for (const auto& r : *d) ids.push_back(r.image_id);
  } else {
    for (const auto& r : std::get<std::vector<PixelRecord>>(records)) ids.push_back(r.object_id);
  }
  return ids;
}

void write_records(std::ostream& out, const Records& records) {
  if (const auto* d = std::get_if<std::vector<DetectionRecord>>(&records)) {
    write_detections(out, *d);
  } else {
    write_pixels(out, std::get<std::vector<PixelRecord>>(records));
  }
}

std::vector<std::size_t> select_indices(const Records& records, Split split, std::uint64_t seed,
                                        const std::set<int>& classes) {
  const std::size_t n = record_count(records);
  std::vector<bool> fit;
  if (split != Split::all) fit = fit_half(group_ids(records), seed);
  std::vector<std::size_t> out;
  std::visit(
      [&](const auto& v) {
        for (std::size_t i = 0; i < n; ++i) {
          if (!classes.empty() && !classes.count(v[i].class_id)) continue;
          if (split == Split::fit && !fit[i]) continue;
          if (split == Split::holdout && fit[i]) continue;
          out.push_back(i);
        }
      },
      records);
  return out;
}

std::vector<double> read_posteriors(const fs::path& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<double> out(expected, -1.0);
  std::vector<bool> seen(expected, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed posterior line: ") + e.what(), line_no);
    }
    std::size_t index = 0;
    double p = 0.0;
    try {
      index = j.at("index").get<std::size_t>();
      p = j.at("posterior").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("posterior line: ") + e.what(), line_no);
    }
    if (index >= expected) throw ValidationError("posterior index beyond record count", line_no);
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("posterior outside [0,1]", line_no);
    out[index] = p;
    seen[index] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ValidationError("posterior sidecar does not cover every record");
  }
  return out;
}

void write_posteriors(std::ostream& out, std::span<const double> posteriors) {
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    out << nlohmann::json{{"index", i}, {"posterior", posteriors[i]}}.dump() << '\n';
  }
}

}  // namespace detcal::cli
