#include "stance/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <unordered_map>

#include <json.hpp>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/util.hpp"

namespace stance {

void SampleSpec::validate() const {
  if (sample_id.empty()) throw ConfigError("sample id must not be empty");
  if (start >= end) throw ConfigError("sample '" + sample_id + "': start must precede end");
}

namespace {

bool parse_jsonl_record(const std::string& line, RetweetEvent& ev) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  auto rt = j.find("retweeter");
  auto inf = j.find("influencer");
  auto ts = j.find("ts");
  if (rt == j.end() || inf == j.end() || ts == j.end()) return false;
  if (!rt->is_string() || !inf->is_string() || !ts->is_number_integer()) return false;
  ev.retweeter = rt->get<std::string>();
  ev.influencer = inf->get<std::string>();
  ev.ts = ts->get<std::int64_t>();
  return !ev.retweeter.empty() && !ev.influencer.empty();
}

bool parse_csv_record(const std::string& line, RetweetEvent& ev) {
  auto parts = split(line, ',');
  if (parts.size() != 3) return false;
  ev.retweeter = std::string(trim(parts[0]));
  ev.influencer = std::string(trim(parts[1]));
  if (!parse_i64(trim(parts[2]), ev.ts)) return false;
  return !ev.retweeter.empty() && !ev.influencer.empty();
}

}  // namespace

std::vector<RetweetEvent> parse_events(std::istream& in, EventFormat format, const SampleSpec& spec,
                                       ParseStats& stats, double max_error_fraction) {
  spec.validate();
  if (!in) throw DataError("unreadable event stream for sample '" + spec.sample_id + "'");

  std::vector<RetweetEvent> events;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (format == EventFormat::Csv && !saw_header) {
      saw_header = true;
      auto parts = split(line, ',');
      if (parts.size() < 3 || trim(parts[0]) != "retweeter" || trim(parts[1]) != "influencer" ||
          trim(parts[2]) != "ts")
        throw DataError("csv header must be retweeter,influencer,ts");
      continue;
    }
    ++stats.records;
    RetweetEvent ev;
    const bool ok = format == EventFormat::Jsonl ? parse_jsonl_record(line, ev) : parse_csv_record(line, ev);
    if (!ok) {
      ++stats.malformed;
      continue;
    }
    if (ev.retweeter == ev.influencer) {
      ++stats.self_retweets;
      continue;
    }
    if (ev.ts < spec.start || ev.ts >= spec.end) {
      ++stats.out_of_range;
      continue;
    }
    ev.sample = spec.sample_id;
    ++stats.parsed;
    events.push_back(std::move(ev));
  }
  if (in.bad()) throw DataError("I/O error while reading events for sample '" + spec.sample_id + "'");
  if (stats.records > 0) {
    const double frac = static_cast<double>(stats.rejected()) / static_cast<double>(stats.records);
    if (frac > max_error_fraction)
      throw DataError("sample '" + spec.sample_id + "': " + std::to_string(stats.rejected()) + "/" +
                      std::to_string(stats.records) + " records rejected, over the " +
                      format_double(max_error_fraction) + " budget");
  }
  return events;
}

std::unordered_set<std::string> load_active_users(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open active-user file: " + path);
  std::unordered_set<std::string> users;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    users.emplace(t);
  }
  return users;
}

std::unordered_set<std::string> derive_active_users(const std::vector<RetweetEvent>& events,
                                                    std::uint64_t min_events) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& ev : events) ++counts[ev.retweeter];
  std::unordered_set<std::string> active;
  for (const auto& [id, n] : counts)
    if (n >= min_events) active.insert(id);
  return active;
}

std::vector<RetweetEvent> filter_persistent(const std::vector<RetweetEvent>& events,
                                            const std::unordered_set<std::string>& active) {
  if (active.empty()) throw ConfigError("active-user set is empty; refusing to zero out the corpus");
  std::vector<RetweetEvent> out;
  out.reserve(events.size());
  for (const auto& ev : events)
    if (active.count(ev.retweeter)) out.push_back(ev);
  return out;
}

std::vector<WindowSlice> partition_windows(const std::vector<RetweetEvent>& events, const SampleSpec& spec,
                                           std::int64_t window_len, std::int64_t step) {
  spec.validate();
  if (window_len <= 0) throw ConfigError("window length must be positive");
  if (step <= 0) throw ConfigError("window step must be positive");
  if (step > window_len) throw ConfigError("window step larger than window length would drop events");

  std::vector<std::int64_t> starts;
  if (spec.end - spec.start <= window_len) {
    starts.push_back(spec.start);
  } else {
    for (std::int64_t s = spec.start; s + window_len <= spec.end; s += step) starts.push_back(s);
    if (starts.back() + window_len < spec.end) starts.push_back(spec.end - window_len);
  }

  std::vector<WindowSlice> out;
  out.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    WindowSlice slice;
    slice.window = TimeWindow{spec.sample_id, static_cast<int>(i), starts[i], starts[i] + window_len};
    out.push_back(std::move(slice));
  }
  for (const auto& ev : events) {
    for (auto& slice : out) {
      if (ev.ts >= slice.window.start && ev.ts < slice.window.end) slice.events.push_back(ev);
    }
  }
  for (const auto& slice : out) {
    if (slice.empty())
      log_event("ingest", "empty_window",
                {{"sample", spec.sample_id}, {"window", slice.window.index}});
  }
  return out;
}

void write_events_jsonl(std::ostream& out, const std::vector<RetweetEvent>& events) {
  for (const auto& ev : events) {
    nlohmann::json j{{"retweeter", ev.retweeter}, {"influencer", ev.influencer}, {"ts", ev.ts}};
    if (!ev.sample.empty()) j["sample"] = ev.sample;
    out << j.dump() << '\n';
  }
}

std::vector<RetweetEvent> read_events_jsonl(const std::string& path, const SampleSpec& spec,
                                            ParseStats& stats, double max_error_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open event file: " + path);
  return parse_events(in, EventFormat::Jsonl, spec, stats, max_error_fraction);
}

}  // namespace stance
