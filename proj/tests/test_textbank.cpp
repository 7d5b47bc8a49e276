#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tgcfa/textbank.hpp"

using namespace tgcfa;
using namespace tgcfa::textbank;

namespace {

std::string small_set_json() {
  return R"({"labels": [
    {"id": 1, "name": "kidney", "descriptions": ["small bean shaped organ", "bright on mri"]},
    {"id": 0, "name": "liver", "descriptions": ["large organ", "uniform texture on ct", "wedge"]}
  ]})";
}

}  // namespace

TEST_CASE("shipped organ descriptions load with four labels and three variants each") {
  const auto set = load_descriptions(testutil::data_path("descriptions/abdominal_organs.json"));
  REQUIRE(set.size() == 4);
  for (const auto& l : set.labels) CHECK(l.descriptions.size() == 3);
  CHECK(set.names() == std::vector<std::string>{"liver", "right kidney", "left kidney", "spleen"});
  CHECK_FALSE(set.background_id.has_value());

  const StubTextEncoder enc;
  const auto table = build_table(set, enc);
  CHECK(table.n() == 4);
  CHECK(table.k() == 64);
}

TEST_CASE("benchmark descriptions name the background label") {
  const auto set = load_descriptions(testutil::data_path("descriptions/synth_abdominal.json"));
  CHECK(set.size() == 5);
  REQUIRE(set.background_id.has_value());
  CHECK(*set.background_id == 0);
  CHECK(set.labels[0].label_name == "background");
}

TEST_CASE("labels are sorted by id after parsing") {
  const auto set = parse_descriptions(small_set_json());
  CHECK(set.labels[0].label_name == "liver");
  CHECK(set.labels[1].label_name == "kidney");
}

TEST_CASE("description set validation") {
  SUBCASE("duplicate id") {
    CHECK_THROWS_AS(parse_descriptions(R"({"labels": [
      {"id": 0, "name": "a", "descriptions": ["x"]},
      {"id": 0, "name": "b", "descriptions": ["y"]}]})"),
                    ValidationError);
  }
  SUBCASE("gap in ids") {
    CHECK_THROWS_AS(parse_descriptions(R"({"labels": [
      {"id": 0, "name": "a", "descriptions": ["x"]},
      {"id": 2, "name": "b", "descriptions": ["y"]}]})"),
                    ValidationError);
  }
  SUBCASE("no variants") {
    CHECK_THROWS_AS(parse_descriptions(R"({"labels": [{"id": 0, "name": "a", "descriptions": []}]})"),
                    ValidationError);
  }
  SUBCASE("blank variant") {
    CHECK_THROWS_AS(parse_descriptions(R"({"labels": [{"id": 0, "name": "a", "descriptions": ["  "]}]})"),
                    ValidationError);
  }
  SUBCASE("background outside range") {
    CHECK_THROWS_AS(parse_descriptions(
                        R"({"background_id": 3, "labels": [{"id": 0, "name": "a", "descriptions": ["x"]}]})"),
                    ValidationError);
  }
  SUBCASE("wrong field type") {
    CHECK_THROWS_AS(parse_descriptions(R"({"labels": [{"id": "0", "name": "a", "descriptions": ["x"]}]})"),
                    SchemaError);
  }
  SUBCASE("malformed json names the line") {
    try {
      parse_descriptions("{\n\"labels\": [\n}\n");
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_descriptions("/nonexistent/descriptions.json"), ValidationError);
  }
}

TEST_CASE("mean of two unit vectors") {
  std::vector<EmbeddingVector> v(2, EmbeddingVector(2));
  v[0] << 1, 0;
  v[1] << 0, 1;
  const auto m = aggregate_label_embedding(v);
  CHECK(m(0) == doctest::Approx(0.5));
  CHECK(m(1) == doctest::Approx(0.5));
}

TEST_CASE("aggregation rejects empty and ragged input") {
  CHECK_THROWS_AS(aggregate_label_embedding(std::vector<EmbeddingVector>{}), ValidationError);
  std::vector<EmbeddingVector> ragged{EmbeddingVector::Ones(3), EmbeddingVector::Ones(4)};
  CHECK_THROWS_AS(aggregate_label_embedding(ragged), ValidationError);
}

TEST_CASE("aggregation is linear and permutation invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int v = 1 + static_cast<int>(uniform_int(rng, 0, 5));
    std::vector<EmbeddingVector> rows(v, EmbeddingVector(7));
    for (auto& r : rows)
      for (int i = 0; i < 7; ++i) r(i) = normal(rng);
    const double alpha = uniform(rng, -3, 3);
    std::vector<EmbeddingVector> scaled;
    for (const auto& r : rows) scaled.push_back(alpha * r);
    const auto base = aggregate_label_embedding(rows);
    CHECK((aggregate_label_embedding(scaled) - alpha * base).cwiseAbs().maxCoeff() < 1e-12);

    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK((aggregate_label_embedding(shuffled) - base).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("stub encoder") {
  const StubTextEncoder enc(16);
  const auto a = embed_text(enc, "The liver is Bright");
  const auto b = embed_text(enc, "the LIVER, is bright!");
  CHECK(a == b);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.size() == 16);
  CHECK(embed_text(enc, "the spleen is bright") != a);
  CHECK(StubTextEncoder(16, 77, 5).embed({"liver"}) != enc.embed({"liver"}));

  const auto single = enc.embed({"liver"});
  const auto dir = enc.token_direction("liver");
  CHECK((single - dir.normalized()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(embed_text(enc, ""), ValidationError);
  CHECK_THROWS_AS(embed_text(enc, "   "), ValidationError);
  CHECK_THROWS_AS(embed_text(enc, "?!."), ValidationError);
}

TEST_CASE("stub encoder truncates long text with a warning") {
  const StubTextEncoder enc(8, 3);
  std::vector<std::string> warnings;
  const auto long_text = embed_text(enc, "one two three four five", &warnings);
  CHECK(warnings.size() == 1);
  CHECK(long_text == embed_text(enc, "one two three"));
}

TEST_CASE("tokenizer lowercases and splits on punctuation") {
  CHECK(tokenize("T2-SPIR MRI, liver.") == std::vector<std::string>{"t2", "spir", "mri", "liver"});
}

TEST_CASE("table rows equal loop means of variant embeddings") {
  const auto set = parse_descriptions(small_set_json());
  const StubTextEncoder enc(12);
  const auto table = build_table(set, enc);
  REQUIRE(table.n() == 2);
  REQUIRE(table.label_names == std::vector<std::string>{"liver", "kidney"});
  for (int r = 0; r < 2; ++r) {
    oracle::Rows rows;
    for (const auto& d : set.labels[r].descriptions) {
      const auto e = embed_text(enc, d);
      rows.emplace_back(e.data(), e.data() + e.size());
    }
    const auto mean = oracle::mean_rows(rows);
    for (int i = 0; i < 12; ++i) CHECK(std::abs(table.embeddings(r, i) - mean[i]) < 1e-7);
  }
  CHECK(build_table(set, enc) == table);
}

TEST_CASE("normalize_variants rescales each variant first") {
  std::string json = R"({"encoder": "fixed", "embeddings": [
    {"text": "a", "vector": [3, 0]}, {"text": "b", "vector": [0, 1]}]})";
  const auto enc = ImportedTextEncoder::from_json(json);
  const auto set = parse_descriptions(R"({"labels": [{"id": 0, "name": "x", "descriptions": ["a", "b"]}]})");
  const auto raw = build_table(set, enc);
  CHECK(raw.embeddings(0, 0) == doctest::Approx(1.5));
  CHECK(raw.embeddings(0, 1) == doctest::Approx(0.5));
  BuildOptions opts;
  opts.normalize_variants = true;
  const auto norm = build_table(set, enc, opts);
  CHECK(norm.embeddings(0, 0) == doctest::Approx(0.5));
  CHECK(norm.embeddings(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("imported embeddings") {
  const std::string json = R"({"encoder": "clip-test", "embeddings": [
    {"text": "large organ", "vector": [1, 0, 0]},
    {"text": "wedge", "vector": [0, 2, 0]}]})";
  const auto enc = ImportedTextEncoder::from_json(json);
  CHECK(enc.dimension() == 3);
  CHECK(enc.fingerprint() == "import:clip-test");
  CHECK(enc.lookup("wedge")(1) == 2.0);
  CHECK_THROWS_AS(enc.lookup("missing"), EncoderError);

  CHECK_THROWS_AS(ImportedTextEncoder::from_json(R"({"encoder": "x", "embeddings": [
    {"text": "a", "vector": [1, 0, 0]}, {"text": "b", "vector": [1, 0]}]})"),
                  ValidationError);
  CHECK_THROWS_AS(ImportedTextEncoder::from_file("/nonexistent.json"), EncoderError);
}

TEST_CASE("pretrained provider without a model directory fails cleanly") {
  const auto set = parse_descriptions(small_set_json());
  CHECK_THROWS_AS(make_pretrained_encoder("/nonexistent/model", set), EncoderError);
}

TEST_CASE("table save and load round-trip") {
  const auto dir = testutil::scratch("textbank_io");
  const auto set = parse_descriptions(small_set_json());
  const auto table = build_table(set, StubTextEncoder(24, 77, 3));
  const auto path = dir + "/t.tgtb";
  save_table(table, path);
  CHECK_FALSE(std::filesystem::exists(path + ".partial"));
  const auto back = load_table(path);
  CHECK(back == table);
  CHECK(back.label_names == table.label_names);
  CHECK(back.encoder_fingerprint == table.encoder_fingerprint);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir + "/" + name, std::ios::binary) << content;
    return dir + "/" + name;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_table(write("magic.tgtb", bad_magic)), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(load_table(write("version.tgtb", bad_version)), FormatError);
  CHECK_THROWS_AS(load_table(write("short.tgtb", bytes.substr(0, bytes.size() - 5))), FormatError);
  CHECK_THROWS_AS(load_table(write("long.tgtb", bytes + "xyz")), FormatError);
  CHECK_THROWS_AS(load_table(dir + "/absent.tgtb"), ValidationError);
}
