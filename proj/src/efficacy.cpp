#include "harmonic/efficacy.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "harmonic/classifiers.hpp"

namespace harmonic {

std::string EfficacyReport::to_json() const {
  nlohmann::ordered_json j;
  j["evaluator"] = evaluator;
  j["weighted_f1"] = weighted_f1;
  j["unparseable"] = unparseable;
  j["seed"] = seed;
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : per_class) {
    j["per_class"].push_back(
        {{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return j.dump(2);
}

std::string TrainerSettings::to_json() const {
  nlohmann::ordered_json j = {{"epochs", epochs}, {"learning_rate", learning_rate}, {"batch_size", batch_size}};
  return j.dump(2);
}

EfficacyReport weighted_f1(std::span<const PredictionRecord> predictions, const std::vector<std::string>& classes) {
  if (predictions.empty()) throw DataError("weighted_f1: no predictions");
  const std::size_t c = classes.size();
  auto index_of = [&](const std::string& label) -> std::optional<std::size_t> {
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  };
  std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
  EfficacyReport rep;
  for (const auto& p : predictions) {
    auto gold = index_of(p.gold);
    if (!gold) throw DataError("weighted_f1: gold label '" + p.gold + "' is not a class");
    std::optional<std::size_t> pred = p.parsed ? index_of(*p.parsed) : std::nullopt;
    if (!pred) {
      ++rep.unparseable;
      ++fn[*gold];
    } else if (*pred == *gold) {
      ++tp[*gold];
    } else {
      ++fn[*gold];
      ++fp[*pred];
    }
  }
  const double total = static_cast<double>(predictions.size());
  double weighted = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    ClassScore s;
    s.label = classes[k];
    s.support = tp[k] + fn[k];
    const double tpd = static_cast<double>(tp[k]);
    s.precision = tp[k] + fp[k] ? tpd / static_cast<double>(tp[k] + fp[k]) : 0.0;
    s.recall = s.support ? tpd / static_cast<double>(s.support) : 0.0;
    const std::size_t denom = 2 * tp[k] + fp[k] + fn[k];
    s.f1 = denom ? 2.0 * tpd / static_cast<double>(denom) : 0.0;
    // support * 2TP / denom keeps integer-valued terms exact.
    if (denom) weighted += static_cast<double>(s.support * 2 * tp[k]) / static_cast<double>(denom);
    rep.per_class.push_back(std::move(s));
  }
  rep.weighted_f1 = weighted / total;
  return rep;
}

MleResult mle(const Dataset& train, const Dataset& test, const std::vector<std::string>& classifiers,
              std::uint64_t seed) {
  if (train.schema.features.size() != test.schema.features.size() || train.schema.label.name != test.schema.label.name) {
    throw DataError("mle: train and test schemas differ");
  }
  if (test.records.empty()) throw DataError("mle: empty test set");
  if (train.records.empty()) throw DataError("mle: empty training set");
  if (classifiers.empty()) throw DataError("mle: no classifiers requested");

  const auto& classes = test.schema.classes();
  std::vector<int> y;
  for (const auto& r : train.records) {
    auto it = std::find(classes.begin(), classes.end(), r.label);
    if (it == classes.end()) throw DataError("mle: training label '" + r.label + "' is not a test class");
    y.push_back(static_cast<int>(it - classes.begin()));
  }
  if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); })) {
    throw DataError("mle: training labels contain a single class");
  }

  const FeatureEncoder encoder(train);
  const FeatureMatrix x_train = encoder.transform(train);
  const FeatureMatrix x_test = encoder.transform(test);

  MleResult out;
  for (const auto& name : classifiers) {
    auto model = make_classifier(name);
    model->fit(x_train, y, static_cast<int>(classes.size()), seed);
    std::vector<PredictionRecord> preds;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::string& label = classes[static_cast<std::size_t>(model->predict(x_test[i]))];
      preds.push_back({i, test.records[i].label, label, label});
    }
    EfficacyReport rep = weighted_f1(preds, classes);
    rep.evaluator = name;
    rep.seed = seed;
    out.mean_f1 += rep.weighted_f1;
    out.reports.push_back(std::move(rep));
  }
  out.mean_f1 /= static_cast<double>(out.reports.size());
  return out;
}

std::vector<InstructionSample> lle_prepare(const Dataset& train, const DownstreamTaskConfig& task) {
  std::vector<InstructionSample> out;
  out.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out.push_back(render_downstream_instruction(train.records[i], train.schema, task, static_cast<std::int64_t>(i)));
  }
  return out;
}

std::optional<std::string> parse_answer(std::string_view answer, const Schema& schema,
                                        const DownstreamTaskConfig& task) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  std::size_t start = 0;
  while (start < answer.size() &&
         (std::isspace(static_cast<unsigned char>(answer[start])) || answer[start] == '"' || answer[start] == '\'' ||
          answer[start] == '`')) {
    ++start;
  }
  const std::string text = lower(answer.substr(start));

  std::optional<std::string> best;
  std::size_t best_len = 0;
  const auto& classes = schema.classes();
  for (const auto& cls : classes) {
    const std::string token = lower(task.token_for(cls));
    if (token.empty() || token.size() <= best_len || !text.starts_with(token)) continue;
    if (text.size() > token.size() && std::isalnum(static_cast<unsigned char>(text[token.size()]))) continue;
    best = cls;
    best_len = token.size();
  }
  return best;
}

EfficacyReport lle_score(const Dataset& test, const DownstreamTaskConfig& task, const Client& client,
                         std::vector<PredictionRecord>* predictions) {
  if (test.records.empty()) throw DataError("lle_score: empty test set");
  std::vector<GenerationRequest> requests;
  for (std::size_t i = 0; i < test.size(); ++i) {
    GenerationRequest req;
    req.prompt = render_downstream_instruction(test.records[i], test.schema, task, static_cast<std::int64_t>(i)).input_text;
    req.temperature = 0.0;
    req.max_new_tokens = 16;
    req.stop = {"\n"};
    requests.push_back(std::move(req));
  }
  const std::vector<BatchItem> responses = client.generate_batch(requests);
  std::vector<PredictionRecord> preds;
  for (std::size_t i = 0; i < test.size(); ++i) {
    PredictionRecord p;
    p.row_id = i;
    p.gold = test.records[i].label;
    if (responses[i].text) {
      p.raw_text = *responses[i].text;
      p.parsed = parse_answer(p.raw_text, test.schema, task);
    } else {
      p.raw_text = "error: " + responses[i].error;
    }
    preds.push_back(std::move(p));
  }
  EfficacyReport rep = weighted_f1(preds, test.schema.classes());
  rep.evaluator = "lle:" + client.backend().id();
  if (predictions) *predictions = std::move(preds);
  return rep;
}

std::string predictions_csv(std::span<const PredictionRecord> predictions) {
  std::ostringstream out;
  csv::write_row(out, {"row_id", "gold", "parsed", "raw_text"});
  for (const auto& p : predictions) {
    csv::write_row(out, {std::to_string(p.row_id), p.gold, p.parsed.value_or(""), p.raw_text});
  }
  return out.str();
}

}  // namespace harmonic
