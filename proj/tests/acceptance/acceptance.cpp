#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmonic/efficacy.hpp"
#include "harmonic/extract.hpp"
#include "harmonic/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace harmonic;
using harmonic::testing::fresh_dir;
using harmonic::testing::german_fixture;
using harmonic::testing::random_dataset;
using harmonic::testing::slurp;
using harmonic::testing::source_path;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPplTolerance = 1e-9;
constexpr double kBase2Tolerance = 1e-12;
constexpr double kMetricTolerance = 1e-12;
constexpr double kF1Tolerance = 1e-12;
constexpr double kChi2Alpha = 0.01;
constexpr double kMinParseRate = 0.95;
constexpr double kKnnBudgetSeconds = 120.0;
constexpr double kPipelineBudgetSeconds = 60.0;

// Collects failure descriptions for one criterion.
struct Verdict {
  std::vector<std::string> failures;
  std::string note;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
  bool passed() const { return failures.empty(); }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double chi2_p(const std::vector<double>& observed, double expected) {
  double stat = 0.0;
  for (double o : observed) stat += (o - expected) * (o - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TemplateConfig german_template() {
  TemplateConfig t;
  t.topic = "user credit scores";
  return t;
}

DownstreamTaskConfig german_task() {
  DownstreamTaskConfig t;
  t.question = "Evaluate the creditworthiness of a customer with the following financial profile.";
  t.label_tokens = {{"1", "good"}, {"0", "bad"}};
  t.answer_order = {"1", "0"};
  return t;
}

Client mock_client(MockConfig cfg, std::size_t in_flight) {
  RetryPolicy retry;
  retry.max_retries = 1;
  retry.backoff_base = std::chrono::milliseconds(1);
  return Client(std::make_shared<MockBackend>(std::move(cfg)), retry, in_flight);
}

PipelineConfig toy_config() {
  PipelineConfig c = load_config_file(source_path("data/toy/config.json"));
  c.seeds = {1234};
  c.target_count = 200;
  c.backend.kind = BackendConfig::Kind::mock;
  return c;
}

std::vector<InstructionSample> read_jsonl(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return read_instructions_jsonl(in);
}

Verdict knn_matches_oracle() {
  Verdict v;
  const auto start = Clock::now();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(mix_seed(77, seed));
    const std::size_t n = 20 + rng.below(481);
    Dataset ds = random_dataset(seed, n, 1 + rng.below(4), rng.below(4), 2 + rng.below(2), 2 + rng.below(4),
                                static_cast<int>(3 + rng.below(30)));
    if (seed % 3) ds = split(ds, {}, seed);
    for (std::size_t k : {1u, 3u, 5u}) {
      const GroupSet got = knn_groups(ds, k);
      const auto want = oracle::brute_force_knn(ds, k);
      bool same = got.groups.size() == want.size();
      for (std::size_t g = 0; same && g < want.size(); ++g) {
        same = got.groups[g].target == want[g].first && got.groups[g].neighbors == want[g].second;
      }
      v.expect(same, "seed " + std::to_string(seed) + " k=" + std::to_string(k));
    }
  }
  const double elapsed = seconds_since(start);
  v.expect(elapsed < kKnnBudgetSeconds, "took " + std::to_string(elapsed) + " s");
  v.note = "100 datasets x k in {1,3,5}, " + std::to_string(elapsed) + " s";
  return v;
}

Verdict filter_rule() {
  Verdict v;
  std::size_t patterns = 0;
  for (std::size_t k = 2; k <= 5; ++k) {
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
      Dataset ds = random_dataset(k, k + 1, 1, 0);
      ds.schema.label.categories = {"a", "b"};
      ds.records[0].label = "a";
      NeighborGroup g;
      g.target = 0;
      std::size_t differing = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const bool differs = (mask >> i) & 1u;
        differing += differs;
        ds.records[i + 1].label = differs ? "b" : "a";
        g.neighbors.push_back(i + 1);
      }
      GroupSet gs;
      gs.k = k;
      gs.groups = {g};
      const bool kept = filter_groups(gs, ds).groups.size() == 1;
      v.expect(kept == (2 * differing <= k), "k=" + std::to_string(k) + " mask=" + std::to_string(mask));
      ++patterns;
    }
  }
  v.note = std::to_string(patterns) + " label patterns";
  return v;
}

Verdict codec_round_trip() {
  Verdict v;
  std::size_t trips = 0;
  for (std::uint64_t seed = 0; trips < 10000; ++seed) {
    const Dataset ds = random_dataset(seed, 100, 1 + seed % 4, 1 + seed % 3, 3, 5, 100000);
    for (std::size_t i = 0; i < ds.size(); ++i, ++trips) {
      const std::string text = encode_record(ds.records[i], ds.schema, mix_seed(seed, i), true).text();
      const DecodeResult r = decode_record(text, ds.schema);
      v.expect(r.ok() && r.record() == ds.records[i], "round trip failed: " + text);
    }
  }
  const Dataset german = german_fixture();
  const std::string base = encode_record(german.records[0], german.schema, 3, true).text();
  const std::string alphabet = "{}\"':,\\ \n\tabcA1.-u0";
  Rng rng(99);
  std::size_t fuzz = 0;
  for (; fuzz < 100000; ++fuzz) {
    std::string text;
    if (fuzz % 2) {
      const std::size_t n = rng.below(96);
      for (std::size_t q = 0; q < n; ++q) {
        text.push_back(rng.below(4) ? alphabet[rng.below(alphabet.size())] : static_cast<char>(rng.below(256)));
      }
    } else {
      text = base;
      const std::size_t edits = 1 + rng.below(4);
      for (std::size_t q = 0; q < edits && !text.empty(); ++q) {
        const std::size_t at = rng.below(text.size());
        if (rng.below(2)) {
          text.erase(at, 1 + rng.below(8));
        } else {
          text[at] = static_cast<char>(rng.below(256));
        }
      }
    }
    try {
      const DecodeResult r = decode_record(text, german.schema);
      if (r.ok()) check_record(r.record(), german.schema);
    } catch (const std::exception& e) {
      v.expect(false, std::string("decoder threw: ") + e.what());
    }
  }
  v.note = std::to_string(trips) + " round trips, " + std::to_string(fuzz) + " fuzz inputs";
  return v;
}

Verdict templates() {
  Verdict v;
  const Dataset ds = german_fixture();
  const std::string preamble =
      "Here are 5 tabular data about user credit scores, each containing 20 columns of features and 1 column of "
      "labels, where the 'status' column is a binary classification label. I will transmit the data to you in JSON "
      "format. Please generate an approximate sample based on these 5 examples.";
  NeighborGroup g;
  g.target = 5;
  g.neighbors = {0, 1, 2, 3, 4};
  const InstructionSample s = render_generator_instruction(g, ds, german_template(), 1234, true, 0);
  v.expect(s.input_text.rfind(preamble, 0) == 0, "preamble differs");
  for (const auto& obj : extract_objects(s.input_text)) {
    for (const auto& [key, value] : obj.pairs) {
      v.expect(s.input_text.find("\"" + key + "\": \"" + value + "\"") != std::string::npos, "unquoted " + key);
    }
  }
  for (int i = 0; i < 5; ++i) {
    static const char* labels[] = {"one", "two", "three", "four", "five"};
    v.expect(s.input_text.find(std::string("\n Example ") + labels[i] + ": {") != std::string::npos, "example label");
  }
  v.expect(s.input_text.ends_with("\n Generate one sample:"), "generation suffix");

  std::ostringstream fin;
  write_instructions_jsonl({render_generator_instruction(g, ds, german_template(), 1234, false, 0)}, fin);
  v.expect(fin.str() == slurp(source_path("tests/golden/german_finetune_canonical.jsonl")), "finetune golden");

  std::vector<InstructionSample> down;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    down.push_back(render_downstream_instruction(ds.records[i], ds.schema, german_task(), static_cast<std::int64_t>(i)));
  }
  std::ostringstream dout;
  write_instructions_jsonl(down, dout);
  v.expect(dout.str() == slurp(source_path("tests/golden/german_downstream.jsonl")), "downstream golden");
  v.expect(down[0].input_text.rfind(german_task().question, 0) == 0, "downstream question first");
  v.expect(down[0].input_text.find(german_task().question + " Respond with only either 'good' or 'bad'.") == 0,
           "answer instruction");
  v.expect(down[4].output_text == "bad" && down[0].output_text == "good", "answer tokens");
  v.note = "preamble, quoted values, example layout, 2 golden files";
  return v;
}

Verdict perplexity_and_leakage() {
  Verdict v;
  MockConfig uniform;
  std::vector<std::string> texts(4);
  for (int i = 0; i < 16; ++i) {
    uniform.vocabulary["w" + std::to_string(i)] = 1.0;
    texts[static_cast<std::size_t>(i % 4)] += "w" + std::to_string(i) + " ";
  }
  const double ppl = perplexity(texts, mock_client(uniform, 2));
  v.expect(std::abs(ppl - 16.0) < kPplTolerance, "uniform PPL " + std::to_string(ppl));

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    ScoredText s;
    double sum2 = 0.0;
    const std::size_t n = 1 + rng.below(50);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1e-4 + (1.0 - 2e-4) * rng.unit();
      s.tokens.push_back("t");
      s.logprobs.push_back(std::log(p));
      sum2 += std::log2(p);
    }
    const double base2 = std::pow(2.0, -sum2 / static_cast<double>(n));
    v.expect(std::abs(text_perplexity(s) - base2) <= kBase2Tolerance * base2, "base-2 identity");
  }

  const Dataset ds = split(ingest_csv(source_path("data/toy/loans.csv"), "approved"), {}, 1234);
  const Dataset train = ds.subset(SplitTag::train);
  const Dataset test = ds.subset(SplitTag::test);
  MockConfig fitted;
  fitted.vocabulary = MockBackend::count_tokens(record_texts(train));
  fitted.smoothing = 1.0;
  const Client scorer = mock_client(fitted, 2);
  const double forward = dlt(train, test, scorer);
  v.expect(forward < 0.0, "DLT of held-out rows under a train-fitted model is " + std::to_string(forward));
  v.expect(dlt(test, train, scorer) == -forward, "antisymmetry");
  v.expect(dlt(train, train, scorer) == 0.0, "self DLT");
  v.note = "PPL " + std::to_string(ppl) + ", DLT(train, test) " + std::to_string(forward);
  return v;
}

Verdict privacy_metrics() {
  Verdict v;
  const Dataset real = ingest_csv_text("x,c,y\n0,a,p\n10,b,q\n4,a,q\n6,b,p\n2,a,p\n", "y");
  const Dataset syn = read_csv_text_with_schema("x,c,y\n0,a,p\n5,a,q\n10,a,p\n7,b,q\n", real.schema);
  const DcrSummary d = dcr(syn, real);
  const std::vector<double> minima = {0.0, 0.1 / 3, 0.8 / 3, 0.3 / 3};
  v.expect(d.minima.size() == 4, "row count");
  for (std::size_t i = 0; i < minima.size() && i < d.minima.size(); ++i) {
    v.expect(std::abs(d.minima[i] - minima[i]) < kMetricTolerance, "DCR row " + std::to_string(i));
  }
  v.expect(std::abs(d.mean - 0.1) < kMetricTolerance, "DCR mean");
  v.expect(std::abs(d.median - 0.4 / 6) < kMetricTolerance, "DCR median");
  v.expect(std::abs(nrs(syn, real, 0.01) - 0.75) < kMetricTolerance, "NRS at 0.01");
  v.expect(std::abs(nrs(syn, real, 0.3) - 0.25) < kMetricTolerance, "NRS at 0.3");

  const Dataset big = random_dataset(11, 300, 3, 2, 2, 4, 40);
  v.expect(nrs(big, big) == 0.0 && dcr(big, big).mean == 0.0, "copy of training data");
  Dataset disjoint = big;
  for (auto& r : disjoint.records) r.label = r.label == "k0" ? "k1" : "k0";
  v.expect(nrs(disjoint, big) == 1.0, "disjoint rows");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset s = random_dataset(500 + seed, 200, 3, 2, 2, 4, 40);
    s.schema = big.schema;
    double last = 1.0;
    for (double tol : {0.0, 0.001, 0.01, 0.05, 0.1, 0.5}) {
      const double value = nrs(s, big, tol);
      v.expect(value <= last, "NRS not monotone in tolerance");
      last = value;
    }
  }
  v.note = "hand fixture exact, extremes, monotone in tolerance";
  return v;
}

Verdict weighted_f1_oracle() {
  Verdict v;
  std::vector<PredictionRecord> hand;
  auto add = [&](const char* gold, const char* parsed, int times) {
    for (int i = 0; i < times; ++i) hand.push_back({hand.size(), gold, parsed, parsed});
  };
  add("A", "A", 3);
  add("A", "B", 1);
  add("B", "B", 5);
  add("B", "A", 1);
  const double hand_f1 = weighted_f1(hand, {"A", "B"}).weighted_f1;
  v.expect(hand_f1 == 0.8, "hand case " + std::to_string(hand_f1));

  Rng rng(23);
  const std::vector<std::string> all = {"a", "b", "c", "d", "e"};
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = 2 + rng.below(4);
    const std::vector<std::string> cls(all.begin(), all.begin() + static_cast<long>(c));
    std::vector<PredictionRecord> preds;
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> parsed;
    const std::size_t n = 1 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(cls[rng.below(c)]);
      parsed.push_back(rng.below(8) == 0 ? std::nullopt : std::optional<std::string>(cls[rng.below(c)]));
      preds.push_back({i, gold.back(), "", parsed.back()});
    }
    const double got = weighted_f1(preds, cls).weighted_f1;
    v.expect(std::abs(got - oracle::weighted_f1(gold, parsed, cls)) < kF1Tolerance, "set " + std::to_string(t));
  }
  v.note = "hand case 0.8, 1000 random sets";
  return v;
}

Verdict end_to_end() {
  Verdict v;
  const PipelineConfig c = toy_config();
  const auto a = fresh_dir("acceptance_run_a"), b = fresh_dir("acceptance_run_b");
  const auto start = Clock::now();
  cmd_prepare(c, a);
  const GenerateSummary g = cmd_generate(c, a);
  const auto report = cmd_evaluate(c, a);
  const double elapsed = seconds_since(start);
  v.expect(elapsed < kPipelineBudgetSeconds, "took " + std::to_string(elapsed) + " s");

  v.expect(g.reports.size() == 1, "one sampling report");
  double rate = 0.0;
  if (!g.reports.empty()) {
    const SamplingReport& r = g.reports.front();
    v.expect(r.produced == 200 && !r.shortfall, "produced " + std::to_string(r.produced));
    rate = static_cast<double>(r.produced) / static_cast<double>(r.prompts_used - r.backend_failures);
    v.expect(rate >= kMinParseRate, "parse success " + std::to_string(rate));
  }
  const auto& agg = report.at("aggregate");
  for (const char* m : {"dcr_mean", "dcr_median", "nrs", "ppl_train", "ppl_syn", "dlt", "mle_mean_f1"}) {
    v.expect(agg.contains(m) && agg.at(m).at("mean").is_number(), std::string("report lacks ") + m);
  }
  v.expect(report.contains("baseline_mle") && report.contains("lle"), "report sections");
  for (const char* f : {artifacts::finetune, artifacts::prompts, artifacts::manifest, artifacts::report}) {
    v.expect(fs::exists(a / f), std::string("missing ") + f);
  }
  v.expect(fs::exists(a / artifacts::synthetic_csv(1234)), "missing synthetic CSV");

  cmd_prepare(c, b);
  cmd_generate(c, b);
  cmd_evaluate(c, b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    v.expect(fs::exists(b / name) && slurp(entry.path()) == slurp(b / name), "rerun differs: " + name.string());
    ++files;
  }
  v.note = std::to_string(elapsed) + " s, parse success " + std::to_string(rate) + ", " + std::to_string(files) +
           " identical artifacts";
  return v;
}

Verdict ablations() {
  Verdict v;
  PipelineConfig c = toy_config();
  c.filter = false;
  c.permute = false;
  const auto dir = fresh_dir("acceptance_ablation");
  const PrepareSummary s = cmd_prepare(c, dir);
  v.expect(s.kept == s.train && s.discarded == 0, "--no-filter kept " + std::to_string(s.kept));

  std::ifstream in(dir / artifacts::dataset, std::ios::binary);
  const Dataset ds = read_snapshot(in);
  std::vector<std::string> canonical;
  for (const auto& f : ds.schema.features) canonical.push_back(f.name);
  canonical.push_back(ds.schema.label.name);
  std::size_t objects = 0;
  for (const auto& sample : read_jsonl(dir / artifacts::finetune)) {
    for (const auto& text : {sample.input_text, sample.output_text.value_or("")}) {
      for (const auto& obj : extract_objects(text)) {
        std::vector<std::string> keys;
        for (const auto& [k, _] : obj.pairs) keys.push_back(k);
        v.expect(keys == canonical, "non-canonical order with --no-permute");
        ++objects;
      }
    }
  }

  // Orderings of a 3-feature record (24) and label position on the German fixture (21).
  const Dataset small = random_dataset(1, 1, 2, 1);
  std::map<std::vector<std::size_t>, double> counts;
  const int draws = 24000;
  for (int i = 0; i < draws; ++i) counts[encode_record(small.records[0], small.schema, mix_seed(41, i), true).permutation] += 1;
  std::vector<double> observed;
  for (const auto& [_, n] : counts) observed.push_back(n);
  const double p_orders = counts.size() == 24 ? chi2_p(observed, draws / 24.0) : 0.0;
  v.expect(p_orders > kChi2Alpha, "ordering chi2 p " + std::to_string(p_orders));

  const Dataset german = german_fixture();
  std::vector<double> pos(21, 0.0);
  const int label_draws = 21000;
  const std::size_t label_slot = german.schema.features.size();
  for (int i = 0; i < label_draws; ++i) {
    const auto p = encode_record(german.records[0], german.schema, mix_seed(42, i), true).permutation;
    pos[static_cast<std::size_t>(std::find(p.begin(), p.end(), label_slot) - p.begin())] += 1;
  }
  const double p_label = chi2_p(pos, label_draws / 21.0);
  v.expect(p_label > kChi2Alpha, "label position chi2 p " + std::to_string(p_label));
  v.note = "kept " + std::to_string(s.kept) + "/" + std::to_string(s.train) + ", " + std::to_string(objects) +
           " canonical objects, p " + std::to_string(p_orders) + " / " + std::to_string(p_label);
  return v;
}

Verdict concurrency_invariance() {
  Verdict v;
  const Dataset ds = german_fixture();
  const GroupSet groups = build_prompt_groups(ds, 5, 300, 9);
  const auto prompts = render_prompts(groups, ds, german_template(), true, 9);
  const auto one = sample_synthetic(prompts, ds.schema, mock_client(MockConfig{}, 1), 250, 1234);
  const auto eight = sample_synthetic(prompts, ds.schema, mock_client(MockConfig{}, 8), 250, 1234);
  v.expect(one.synthetic == eight.synthetic, "synthetic tables differ");
  v.expect(to_csv(one.synthetic) == to_csv(eight.synthetic), "CSV bytes differ");
  v.expect(one.report.to_json() == eight.report.to_json(), "sampling reports differ");
  v.note = std::to_string(one.synthetic.size()) + " rows identical at in-flight 1 and 8";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"kNN groups equal brute force", knn_matches_oracle},
      {"label-majority filter rule", filter_rule},
      {"codec round trip and fuzz", codec_round_trip},
      {"instruction templates", templates},
      {"perplexity and leakage", perplexity_and_leakage},
      {"DCR and NRS", privacy_metrics},
      {"weighted F1", weighted_f1_oracle},
      {"toy end-to-end run", end_to_end},
      {"filter and permutation ablations", ablations},
      {"concurrency invariance", concurrency_invariance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    std::cout << (v.passed() ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first;
    if (!v.note.empty()) std::cout << " (" << v.note << ")";
    std::cout << "\n";
    for (const auto& f : v.failures) std::cout << "    " << f << "\n";
    failed += !v.passed();
  }
  std::cout << (failed ? "FAIL" : "PASS") << " overall: " << criteria.size() - static_cast<std::size_t>(failed) << "/"
            << criteria.size() << "\n";
  return failed ? 1 : 0;
}
