#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>
#include <map>
#include <regex>
#include <sstream>

#include "harmonic/codec.hpp"
#include "harmonic/extract.hpp"
#include "support.hpp"

using namespace harmonic;
using harmonic::testing::german_fixture;
using harmonic::testing::random_dataset;
using harmonic::testing::slurp;
using harmonic::testing::source_path;

namespace {

const char* kGermanPreamble =
    "Here are 5 tabular data about user credit scores, each containing 20 columns of features and 1 column of "
    "labels, where the 'status' column is a binary classification label. I will transmit the data to you in JSON "
    "format. Please generate an approximate sample based on these 5 examples.";

TemplateConfig german_template() {
  TemplateConfig t;
  t.topic = "user credit scores";
  return t;
}

NeighborGroup german_group() {
  NeighborGroup g;
  g.target = 5;
  g.neighbors = {0, 1, 2, 3, 4};
  return g;
}

DownstreamTaskConfig german_task() {
  DownstreamTaskConfig t;
  t.question = "Evaluate the creditworthiness of a customer with the following financial profile.";
  t.label_tokens = {{"1", "good"}, {"0", "bad"}};
  t.answer_order = {"1", "0"};
  return t;
}

// Replaces every {...} region with {} so that template text can be compared
// independently of the feature order inside each record.
std::string skeleton(const std::string& text) { return std::regex_replace(text, std::regex("\\{[^{}]*\\}"), "{}"); }

double chi2_p(const std::vector<double>& observed, double expected) {
  double stat = 0.0;
  for (double o : observed) stat += (o - expected) * (o - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("canonical encoding quotes every value") {
  const Dataset ds = german_fixture();
  const EncodedRecord e = encode_record(ds.records[0], ds.schema, 0, false);
  const std::string text = e.text();
  CHECK(text.rfind("{\"Status of existing checking account\": \"A11\", \"Duration in month\": \"45\", ", 0) == 0);
  CHECK(text.ends_with(", \"status\": \"1\"}"));
  for (std::size_t i = 0; i < e.permutation.size(); ++i) CHECK(e.permutation[i] == i);
}

TEST_CASE("permuted encoding is a reordering") {
  const Dataset ds = german_fixture();
  const EncodedRecord canon = encode_record(ds.records[1], ds.schema, 0, false);
  const EncodedRecord perm = encode_record(ds.records[1], ds.schema, 99, true);
  CHECK(perm.pairs != canon.pairs);
  for (std::size_t i = 0; i < perm.pairs.size(); ++i) CHECK(perm.pairs[i] == canon.pairs[perm.permutation[i]]);
  CHECK(encode_record(ds.records[1], ds.schema, 99, true).pairs == perm.pairs);
}

TEST_CASE("sentence encoding") {
  const Dataset ds = ingest_csv_text("a,b,y\n1,x,p\n2,z,q\n", "y");
  CHECK(encode_sentence(ds.records[0], ds.schema) == "a is 1, b is x, y is p");
}

TEST_CASE("encode/decode round-trips random records under random permutations") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset ds = random_dataset(seed, 50, 3, 4, 3, 5, 1000);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::string text = encode_record(ds.records[i], ds.schema, mix_seed(seed, i), true).text();
      const DecodeResult r = decode_record(text, ds.schema);
      REQUIRE(r.ok());
      CHECK(r.record() == ds.records[i]);
      CHECK(r.extra_objects == 0);
    }
  }
}

TEST_CASE("awkward strings survive the round trip") {
  const char* csv =
      "name,note,y\n"
      "\"he said \"\"hi\"\"\",back\\slash,a\n"
      "caf\xc3\xa9,\"{braces}, and: colons\",b\n"
      "'single',tab\there,a\n";
  const Dataset ds = ingest_csv_text(csv, "y");
  for (const auto& rec : ds.records) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const DecodeResult r = decode_record(encode_record(rec, ds.schema, s, true).text(), ds.schema);
      REQUIRE(r.ok());
      CHECK(r.record() == rec);
    }
  }
}

TEST_CASE("permutation is uniform over orderings") {
  const Dataset ds = random_dataset(1, 1, 2, 1);  // 3 features + label = 24 orders
  std::map<std::vector<std::size_t>, double> counts;
  const int draws = 24000;
  for (int i = 0; i < draws; ++i) counts[encode_record(ds.records[0], ds.schema, mix_seed(5, i), true).permutation] += 1;
  REQUIRE(counts.size() == 24);
  std::vector<double> observed;
  for (const auto& [_, c] : counts) observed.push_back(c);
  CHECK(chi2_p(observed, draws / 24.0) > 0.01);
}

TEST_CASE("the label lands in every position uniformly") {
  const Dataset ds = german_fixture();
  std::vector<double> pos(21, 0.0);
  const int draws = 21000;
  for (int i = 0; i < draws; ++i) {
    const auto p = encode_record(ds.records[0], ds.schema, mix_seed(8, i), true).permutation;
    pos[static_cast<std::size_t>(std::find(p.begin(), p.end(), 20) - p.begin())] += 1;
  }
  CHECK(chi2_p(pos, draws / 21.0) > 0.01);
}

TEST_CASE("generator instruction matches the reference sample layout") {
  const Dataset ds = german_fixture();
  const InstructionSample s = render_generator_instruction(german_group(), ds, german_template(), 1234, true, 0);
  CHECK(s.input_text.rfind(kGermanPreamble, 0) == 0);
  CHECK(render_preamble(german_template(), ds.schema, 5) == kGermanPreamble);
  CHECK(s.input_text.find("\"Duration in month\": \"45\"") != std::string::npos);

  const auto reference = nlohmann::json::parse(slurp(source_path("tests/fixtures/german_generator_sample.json")));
  const std::string reference_input = reference.at("input").get<std::string>();
  const std::string reference_output = reference.at("output").get<std::string>();
  CHECK(skeleton(s.input_text) == skeleton(reference_input));
  REQUIRE(s.output_text);
  CHECK(skeleton(*s.output_text) == skeleton(reference_output));
}

TEST_CASE("reference sample records decode to the fixture rows") {
  const Dataset ds = german_fixture();
  const auto reference = nlohmann::json::parse(slurp(source_path("tests/fixtures/german_generator_sample.json")));
  const std::string input = reference.at("input").get<std::string>();
  const auto objects = extract_objects(input);
  REQUIRE(objects.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const DecodeResult r = decode_record(input.substr(objects[i].begin, objects[i].end - objects[i].begin), ds.schema);
    REQUIRE(r.ok());
    CHECK(r.record() == ds.records[i]);
  }
  const DecodeResult out = decode_record(reference.at("output").get<std::string>(), ds.schema);
  REQUIRE(out.ok());
  CHECK(out.record() == ds.records[5]);
}

TEST_CASE("canonical finetune sample matches the golden JSONL byte for byte") {
  const Dataset ds = german_fixture();
  std::ostringstream out;
  write_instructions_jsonl({render_generator_instruction(german_group(), ds, german_template(), 1234, false, 0)}, out);
  CHECK(out.str() == slurp(source_path("tests/golden/german_finetune_canonical.jsonl")));
}

TEST_CASE("downstream samples match the golden JSONL byte for byte") {
  const Dataset ds = german_fixture();
  std::vector<InstructionSample> samples;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    samples.push_back(render_downstream_instruction(ds.records[i], ds.schema, german_task(), static_cast<std::int64_t>(i)));
  }
  std::ostringstream out;
  write_instructions_jsonl(samples, out);
  CHECK(out.str() == slurp(source_path("tests/golden/german_downstream.jsonl")));
  CHECK(samples[0].input_text.find("Respond with only either 'good' or 'bad'.") != std::string::npos);
  CHECK(samples[4].output_text == "bad");
}

TEST_CASE("downstream template with several classes and verbalized values") {
  const Dataset ds = ingest_csv_text("colour,size,y\nred,1,a\nblue,2,b\nred,3,c\n", "y");
  DownstreamTaskConfig t;
  t.question = "Which grade?";
  t.feature_names = {{"colour", "Colour"}};
  t.value_names = {{"colour", {{"red", "bright red"}}}};
  const InstructionSample s = render_downstream_instruction(ds.records[0], ds.schema, t, 3);
  CHECK(s.input_text ==
        "Which grade? Respond with only one of 'a', 'b' or 'c'. \n Text: 'The state of Colour is bright red, The state "
        "of size is 1.'\n Answer:");
  CHECK(s.output_text == "a");
  t.answer_order = {"a", "b"};
  CHECK_THROWS_AS(render_downstream_instruction(ds.records[0], ds.schema, t, 0), DataError);
}

TEST_CASE("prompt samples carry no answer and JSONL round-trips") {
  const Dataset ds = german_fixture();
  NeighborGroup g;
  g.neighbors = {3, 1, 4, 0, 5};
  const InstructionSample p = render_generator_instruction(g, ds, german_template(), 1, true, 7);
  CHECK_FALSE(p.output_text);
  const std::string line = conversation_json(p);
  CHECK(line.find("assistant") == std::string::npos);
  std::stringstream ss;
  const std::vector<InstructionSample> both = {p, render_generator_instruction(german_group(), ds, german_template(), 1, true, 8)};
  write_instructions_jsonl(both, ss);
  CHECK(read_instructions_jsonl(ss) == both);
}

TEST_CASE("decoder tolerates model-style output") {
  const Dataset ds = ingest_csv_text("age,job,y\n30,clerk,yes\n40,chef,no\n", "y");
  const std::vector<std::string> ok = {
      "{\"age\": \"35\", \"job\": \"chef\", \"y\": \"no\"}",
      "Sure! Here is one: {\"y\": \"no\", \"age\": \"35\", \"job\": \"chef\"}.",
      "{'age': '35', 'job': 'chef', 'y': 'no'}",
      "{age: 35, job: chef, y: no}",
      "{\"age\": 35, \"job\": \"chef\", \"y\": \"no\",}",
      "  {\n  \"age\" : \"35\" ,\n  \"job\":\"chef\",\n  \"y\":\"no\"\n}\n",
  };
  for (const auto& text : ok) {
    const DecodeResult r = decode_record(text, ds.schema);
    INFO(text);
    REQUIRE(r.ok());
    CHECK(r.record().values[0].number == 35.0);
    CHECK(r.record().values[1].text == "chef");
    CHECK(r.record().label == "no");
  }
}

TEST_CASE("decoder reports each failure kind") {
  const Dataset ds = ingest_csv_text("age,job,y\n30,clerk,yes\n40,chef,no\n", "y");
  auto kind = [&](const std::string& text) { return decode_record(text, ds.schema).error().kind; };
  CHECK(kind("no braces here") == DecodeErrorKind::no_object_found);
  CHECK(kind("") == DecodeErrorKind::no_object_found);
  CHECK(kind("{\"age\": \"35\", \"y\": \"no\"}") == DecodeErrorKind::missing_feature);
  CHECK(kind("{\"age\": \"35\", \"job\": \"chef\"}") == DecodeErrorKind::missing_feature);
  CHECK(kind("{\"age\": \"35\", \"age\": \"36\", \"job\": \"chef\", \"y\": \"no\"}") == DecodeErrorKind::duplicate_feature);
  CHECK(kind("{\"age\": \"old\", \"job\": \"chef\", \"y\": \"no\"}") == DecodeErrorKind::type_mismatch);
  CHECK(kind("{\"age\": \"35\", \"job\": \"pilot\", \"y\": \"no\"}") == DecodeErrorKind::unknown_category);
  CHECK(kind("{\"age\": \"35\", \"job\": \"chef\", \"y\": \"maybe\"}") == DecodeErrorKind::unknown_category);
  CHECK(kind("{\"age\": \"35\", \"job\": \"chef\", \"y\": \"no\", \"pet\": \"cat\"}") == DecodeErrorKind::unknown_key);
  CHECK(kind("{\"age\": \"35\", \"job\": \"ch") == DecodeErrorKind::missing_feature);
  const DecodeError e = decode_record("{\"age\": \"x\", \"job\": \"chef\", \"y\": \"no\"}", ds.schema).error();
  CHECK(e.name == "age");
  CHECK(e.value == "x");
  CHECK_FALSE(e.message().empty());
}

TEST_CASE("decoder keeps the first object and counts the rest") {
  const Dataset ds = ingest_csv_text("age,job,y\n30,clerk,yes\n40,chef,no\n", "y");
  const DecodeResult r = decode_record(
      "{\"age\": \"1\", \"job\": \"chef\", \"y\": \"no\"}\n{\"age\": \"2\", \"job\": \"clerk\", \"y\": \"yes\"}\n{}", ds.schema);
  REQUIRE(r.ok());
  CHECK(r.record().values[0].number == 1.0);
  CHECK(r.extra_objects == 1);
}

TEST_CASE("decoder survives fuzzed input") {
  const Dataset ds = german_fixture();
  const std::string seed_text = encode_record(ds.records[0], ds.schema, 3, true).text();
  const std::string alphabet = "{}\"':,\\ \n\tabcA1.-u0";
  Rng rng(2024);
  std::size_t ok = 0;
  for (int i = 0; i < 100000; ++i) {
    std::string text;
    switch (i % 3) {
      case 0: {  // raw bytes
        const std::size_t n = rng.below(64);
        for (std::size_t q = 0; q < n; ++q) text.push_back(static_cast<char>(rng.below(256)));
        break;
      }
      case 1: {  // structural characters
        const std::size_t n = rng.below(96);
        for (std::size_t q = 0; q < n; ++q) text.push_back(alphabet[rng.below(alphabet.size())]);
        break;
      }
      default: {  // mutated valid encoding
        text = seed_text;
        const std::size_t edits = 1 + rng.below(4);
        for (std::size_t q = 0; q < edits && !text.empty(); ++q) {
          const std::size_t at = rng.below(text.size());
          switch (rng.below(3)) {
            case 0: text.erase(at, 1 + rng.below(8)); break;
            case 1: text.insert(at, 1, alphabet[rng.below(alphabet.size())]); break;
            default: text[at] = static_cast<char>(rng.below(256)); break;
          }
        }
      }
    }
    DecodeResult r{Record{}, 0};
    REQUIRE_NOTHROW(r = decode_record(text, ds.schema));
    if (r.ok()) {
      ++ok;
      CHECK_NOTHROW(check_record(r.record(), ds.schema));
    }
  }
  CHECK(ok > 0);
}
