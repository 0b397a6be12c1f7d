#include "stance/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/rng.hpp"
#include "stance/util.hpp"

namespace stance {

void PlantedConfig::validate() const {
  if (n_users < 2) throw ConfigError("planted config needs at least 2 users");
  if (n_influencers_per_sample < 1) throw ConfigError("planted config needs influencers");
  if (samples.empty()) throw ConfigError("planted config needs at least one sample");
  if (k_stances < 1) throw ConfigError("k_stances must be positive");
  if (static_cast<int>(stance_mixture.size()) != k_stances)
    throw ConfigError("stance_mixture length must equal k_stances");
  double total = 0.0;
  for (double p : stance_mixture) {
    if (p < 0.0 || p > 1.0) throw ConfigError("stance mixture entries must be in [0,1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("stance mixture must sum to 1");
  if (cross_sample_participation < 0.0 || cross_sample_participation > 1.0)
    throw ConfigError("participation must be in [0,1]");
  if (stance_consistency < 0.0 || stance_consistency > 1.0)
    throw ConfigError("stance_consistency must be in [0,1]");
  if (events_per_active_user <= 0.0) throw ConfigError("events_per_active_user must be positive");
  if (activity_sigma < 0.0) throw ConfigError("activity_sigma must be non-negative");
  for (const auto& s : samples) {
    if (s.id.empty() || s.start >= s.end) throw ConfigError("bad sample spec in planted config");
    if (static_cast<int>(s.affinity.size()) != k_stances)
      throw ConfigError("affinity must be k_stances x k_stances");
    for (const auto& row : s.affinity) {
      if (static_cast<int>(row.size()) != k_stances)
        throw ConfigError("affinity must be k_stances x k_stances");
      for (double p : row)
        if (p < 0.0 || p > 1.0) throw ConfigError("affinity entries must be in [0,1]");
    }
  }
}

PlantedConfig PlantedConfig::from_json_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("planted config is not valid JSON: " + path);

  PlantedConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.n_users = j.value("n_users", 0);
  cfg.n_influencers_per_sample = j.value("n_influencers_per_sample", 0);
  cfg.k_stances = j.value("k_stances", 2);
  if (j.contains("stance_mixture")) {
    cfg.stance_mixture = j["stance_mixture"].get<std::vector<double>>();
  } else {
    cfg.stance_mixture.assign(static_cast<std::size_t>(cfg.k_stances),
                              1.0 / static_cast<double>(cfg.k_stances));
  }
  cfg.cross_sample_participation = j.value("cross_sample_participation", 1.0);
  cfg.events_per_active_user = j.value("events_per_active_user", 10.0);
  cfg.activity_sigma = j.value("activity_sigma", 0.75);
  cfg.stance_consistency = j.value("stance_consistency", 1.0);

  const double in_aff = j.value("in_affinity", 0.3);
  const double out_aff = j.value("out_affinity", 0.005);
  if (!j.contains("samples") || !j["samples"].is_array())
    throw ConfigError("planted config needs a samples array");
  for (const auto& js : j["samples"]) {
    PlantedSampleSpec s;
    s.id = js.at("id").get<std::string>();
    s.start = js.contains("start") && js["start"].is_string()
                  ? parse_time_utc(js["start"].get<std::string>())
                  : js.value("start", std::int64_t{0});
    s.end = js.contains("end") && js["end"].is_string() ? parse_time_utc(js["end"].get<std::string>())
                                                        : js.value("end", std::int64_t{0});
    if (js.contains("affinity")) {
      s.affinity = js["affinity"].get<std::vector<std::vector<double>>>();
    } else {
      s.affinity.assign(static_cast<std::size_t>(cfg.k_stances),
                        std::vector<double>(static_cast<std::size_t>(cfg.k_stances), out_aff));
      for (int k = 0; k < cfg.k_stances; ++k)
        s.affinity[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = in_aff;
    }
    cfg.samples.push_back(std::move(s));
  }
  cfg.validate();
  return cfg;
}

namespace {

std::string user_id_of(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%06d", i);
  return buf;
}

std::string influencer_id_of(const std::string& sample, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%05d", i);
  return std::string(buf) + "@" + sample;
}

}  // namespace

GroundTruth generate(const PlantedConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  const double expected_matched =
      static_cast<double>(cfg.n_users) *
      std::pow(cfg.cross_sample_participation, static_cast<double>(cfg.samples.size()));
  if (expected_matched < 2.0)
    log_event("synth", "low_expected_intersection",
              {{"expected_matched_users", expected_matched},
               {"participation", cfg.cross_sample_participation}});

  GroundTruth gt;
  gt.user_ids.reserve(static_cast<std::size_t>(cfg.n_users));
  for (int i = 0; i < cfg.n_users; ++i) gt.user_ids.push_back(user_id_of(i));

  // global stances from the mixture
  Rng stance_rng(derive_seed(cfg.seed, "stances"));
  gt.stance.reserve(gt.user_ids.size());
  for (int i = 0; i < cfg.n_users; ++i) gt.stance.push_back(stance_rng.categorical(cfg.stance_mixture));

  const double mu = std::log(cfg.events_per_active_user) - 0.5 * cfg.activity_sigma * cfg.activity_sigma;

  for (const auto& sample : cfg.samples) {
    Rng rng(derive_seed(cfg.seed, sample.id));
    SampleTruth truth;
    truth.active.assign(static_cast<std::size_t>(cfg.n_users), 0);
    truth.event_count.assign(static_cast<std::size_t>(cfg.n_users), 0);
    truth.effective_stance.assign(static_cast<std::size_t>(cfg.n_users), -1);

    // contiguous influencer blocks, near-equal sizes
    truth.influencer_block.resize(static_cast<std::size_t>(cfg.n_influencers_per_sample));
    std::vector<std::vector<int>> block_members(static_cast<std::size_t>(cfg.k_stances));
    for (int i = 0; i < cfg.n_influencers_per_sample; ++i) {
      const int b = static_cast<int>((static_cast<std::int64_t>(i) * cfg.k_stances) /
                                     cfg.n_influencers_per_sample);
      truth.influencer_block[static_cast<std::size_t>(i)] = b;
      block_members[static_cast<std::size_t>(b)].push_back(i);
      gt.influencer_ids.push_back(influencer_id_of(sample.id, i));
    }

    std::ofstream out(std::filesystem::path(out_dir) / (sample.id + ".jsonl"), std::ios::binary);
    if (!out) throw DataError("cannot write sample events in " + out_dir);

    for (int u = 0; u < cfg.n_users; ++u) {
      if (!rng.bernoulli(cfg.cross_sample_participation)) continue;
      truth.active[static_cast<std::size_t>(u)] = 1;

      int z = gt.stance[static_cast<std::size_t>(u)];
      if (cfg.stance_consistency < 1.0 && !rng.bernoulli(cfg.stance_consistency))
        z = stance_rng.categorical(cfg.stance_mixture);
      truth.effective_stance[static_cast<std::size_t>(u)] = z;

      const auto& weights = sample.affinity[static_cast<std::size_t>(z)];
      std::vector<double> block_mass(weights.size());
      for (std::size_t b = 0; b < weights.size(); ++b)
        block_mass[b] = weights[b] * static_cast<double>(block_members[b].size());

      auto n_events = static_cast<std::int64_t>(std::llround(rng.lognormal(mu, cfg.activity_sigma)));
      if (n_events < 1) n_events = 1;
      truth.event_count[static_cast<std::size_t>(u)] = n_events;

      for (std::int64_t e = 0; e < n_events; ++e) {
        const int b = rng.categorical(block_mass);
        const auto& members = block_members[static_cast<std::size_t>(b)];
        const int inf = members[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(members.size())))];
        const std::int64_t ts = rng.uniform_int(sample.start, sample.end);
        nlohmann::json j{{"retweeter", user_id_of(u)},
                         {"influencer", influencer_id_of(sample.id, inf)},
                         {"ts", ts},
                         {"sample", sample.id}};
        out << j.dump() << '\n';
      }
    }
    if (!out) throw DataError("write failed for sample " + sample.id);
    gt.samples[sample.id] = std::move(truth);
  }

  gt.save((std::filesystem::path(out_dir) / "ground_truth.json").string());
  return gt;
}

void GroundTruth::save(const std::string& path) const {
  nlohmann::json j;
  j["user_ids"] = user_ids;
  j["influencer_ids"] = influencer_ids;
  j["stance"] = stance;
  for (const auto& [sid, t] : samples) {
    nlohmann::json js;
    js["active"] = t.active;
    js["event_count"] = t.event_count;
    js["influencer_block"] = t.influencer_block;
    js["effective_stance"] = t.effective_stance;
    j["samples"][sid] = std::move(js);
  }
  write_text_file(path, j.dump(2) + "\n");
}

GroundTruth GroundTruth::load(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw DataError("ground truth is not valid JSON: " + path);
  GroundTruth gt;
  gt.user_ids = j.at("user_ids").get<std::vector<std::string>>();
  gt.influencer_ids = j.at("influencer_ids").get<std::vector<std::string>>();
  gt.stance = j.at("stance").get<std::vector<int>>();
  if (j.contains("samples")) {
    for (const auto& [sid, js] : j["samples"].items()) {
      SampleTruth t;
      t.active = js.at("active").get<std::vector<std::uint8_t>>();
      t.event_count = js.at("event_count").get<std::vector<std::int64_t>>();
      t.influencer_block = js.at("influencer_block").get<std::vector<int>>();
      t.effective_stance = js.at("effective_stance").get<std::vector<int>>();
      gt.samples[sid] = std::move(t);
    }
  }
  return gt;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b, bool exclude_noise,
                           int noise) {
  if (a.size() != b.size()) throw DataError("ARI labelings must cover the same points");
  std::vector<int> la, lb;
  la.reserve(a.size());
  lb.reserve(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (exclude_noise && (a[i] == noise || b[i] == noise)) continue;
    la.push_back(a[i]);
    lb.push_back(b[i]);
  }
  const std::size_t n = la.size();
  if (n <= 1) return 1.0;

  auto compact = [](const std::vector<int>& v) {
    std::map<int, int> remap;
    std::vector<int> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto [it, fresh] = remap.emplace(v[i], static_cast<int>(remap.size()));
      (void)fresh;
      out[i] = it->second;
    }
    return std::pair<std::vector<int>, int>(out, static_cast<int>(remap.size()));
  };
  auto [ca, ka] = compact(la);
  auto [cb, kb] = compact(lb);

  std::vector<std::int64_t> table(static_cast<std::size_t>(ka) * kb, 0);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(ka), 0);
  std::vector<std::int64_t> cols(static_cast<std::size_t>(kb), 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[static_cast<std::size_t>(ca[i]) * kb + cb[i]];
    ++rows[static_cast<std::size_t>(ca[i])];
    ++cols[static_cast<std::size_t>(cb[i])];
  }
  auto comb2 = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto v : table) sum_ij += comb2(v);
  for (auto v : rows) sum_a += comb2(v);
  for (auto v : cols) sum_b += comb2(v);
  const double total = comb2(static_cast<std::int64_t>(n));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (std::abs(maximum - expected) < 1e-12) {
    // degenerate: identical partitions score 1, anything else 0
    return ca == cb ? 1.0 : 0.0;
  }
  return (sum_ij - expected) / (maximum - expected);
}

}  // namespace stance
