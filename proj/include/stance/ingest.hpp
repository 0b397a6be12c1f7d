#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <vector>

namespace stance {

// One (retweeter, influencer, timestamp, sample) sharing record.
struct RetweetEvent {
  std::string retweeter;
  std::string influencer;
  std::int64_t ts = 0;  // epoch seconds
  std::string sample;

  bool operator==(const RetweetEvent&) const = default;
};

struct SampleSpec {
  std::string sample_id;
  std::int64_t start = 0;  // inclusive
  std::int64_t end = 0;    // exclusive
  std::vector<std::string> source_paths;

  void validate() const;
};

struct TimeWindow {
  std::string sample_id;
  int index = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive; end - start = window length
};

enum class EventFormat { Jsonl, Csv };

struct ParseStats {
  std::uint64_t records = 0;       // non-empty data lines seen
  std::uint64_t parsed = 0;        // events returned
  std::uint64_t malformed = 0;     // missing/bad fields
  std::uint64_t self_retweets = 0;
  std::uint64_t out_of_range = 0;  // well-formed, outside [start, end)

  std::uint64_t rejected() const { return malformed + self_retweets; }
};

// Parses JSONL ({"retweeter","influencer","ts"}) or CSV (header
// retweeter,influencer,ts). Malformed records and self-retweets are tallied;
// the run aborts if their fraction exceeds max_error_fraction. Events outside
// the sample range are excluded with a counter, not an error.
std::vector<RetweetEvent> parse_events(std::istream& in, EventFormat format, const SampleSpec& spec,
                                       ParseStats& stats, double max_error_fraction = 0.01);

// One id per line, '#' comments and blank lines allowed.
std::unordered_set<std::string> load_active_users(const std::string& path);

// Fallback for --min-events: active = retweeters with at least min_events.
std::unordered_set<std::string> derive_active_users(const std::vector<RetweetEvent>& events,
                                                    std::uint64_t min_events);

// Keeps exactly the events whose retweeter is active; influencers are not
// filtered here. Order preserved; idempotent.
std::vector<RetweetEvent> filter_persistent(const std::vector<RetweetEvent>& events,
                                            const std::unordered_set<std::string>& active);

struct WindowSlice {
  TimeWindow window;
  std::vector<RetweetEvent> events;  // original order

  bool empty() const { return events.empty(); }
};

// Rolling windows of fixed length `window_len` advancing by `step` over
// [spec.start, spec.end). An event lands in every window containing its
// timestamp. Empty windows are emitted so indices stay aligned. If the range
// does not tile exactly, one extra full-length window anchored at the range
// end keeps the tail covered.
std::vector<WindowSlice> partition_windows(const std::vector<RetweetEvent>& events, const SampleSpec& spec,
                                           std::int64_t window_len, std::int64_t step);

void write_events_jsonl(std::ostream& out, const std::vector<RetweetEvent>& events);
std::vector<RetweetEvent> read_events_jsonl(const std::string& path, const SampleSpec& spec,
                                            ParseStats& stats, double max_error_fraction = 0.01);

}  // namespace stance
