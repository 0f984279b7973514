#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "explia/dataset.hpp"
#include "support.hpp"

using namespace explia;
using namespace explia::dataset;

namespace {

const LabelTaxonomy& toy_taxonomy() {
  static const LabelTaxonomy t({{"BenignTraffic", "Benign"}, {"Flood-A", "DDoS"}, {"Scan-B", "Recon"}}, "Benign");
  return t;
}

RawTable raw(const std::vector<std::vector<double>>& rows, std::vector<std::string> labels) {
  RawTable t;
  t.schema = make_schema({"a", "b"});
  t.values = Matrix(0, 2);
  for (const auto& r : rows) t.values.append_row(r);
  t.labels = std::move(labels);
  t.known_label.assign(t.labels.size(), true);
  return t;
}

}  // namespace

TEST_CASE("ciciot schema: 46 raw columns, 40 kept, 34 subcategories in 8 classes") {
  CHECK(ciciot_raw_schema()->width() == 46);
  CHECK(ciciot_feature_names().size() == 40);
  CHECK(ciciot_constant_names().size() == 6);
  const auto& tax = LabelTaxonomy::ciciot2023();
  CHECK(tax.subcategory_names().size() == 34);
  CHECK(tax.class_names().size() == 8);
  CHECK(tax.binary_of("BenignTraffic") == 0);
  CHECK(tax.binary_of("DictionaryBruteForce") == 1);
  CHECK(tax.class_of("XSS") == "Web");
}

TEST_CASE("load_csv") {
  support::TempDir dir("load");
  const auto schema = make_schema({"a", "b"});

  SUBCASE("rows in file order, label column anywhere, bad cells become missing") {
    write_file(dir / "t.csv", "label,b,a,extra\nFlood-A,2,1,9\nBenignTraffic,x,3,9\nNotAThing,5,4,9\n");
    const auto t = load_csv(dir / "t.csv", schema, toy_taxonomy());
    REQUIRE(t.rows() == 3);
    CHECK(t.values(0, 0) == 1);
    CHECK(t.values(0, 1) == 2);
    CHECK(std::isnan(t.values(1, 1)));
    CHECK(t.labels[2] == "NotAThing");
    CHECK(t.known_label == std::vector<bool>{true, true, false});
  }
  SUBCASE("empty file with valid header") {
    write_file(dir / "e.csv", "a,b,label\n");
    CHECK(load_csv(dir / "e.csv", schema, toy_taxonomy()).rows() == 0);
  }
  SUBCASE("missing label column") {
    write_file(dir / "n.csv", "a,b\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "n.csv", schema, toy_taxonomy()), doctest::Contains("label"), Error);
  }
  SUBCASE("missing feature column is named") {
    write_file(dir / "m.csv", "a,label\n1,Flood-A\n");
    try {
      load_csv(dir / "m.csv", schema, toy_taxonomy());
      FAIL("expected schema error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Schema);
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
  }
}

TEST_CASE("clean drops non-finite rows and exact duplicates, keeps order") {
  const double inf = std::numeric_limits<double>::infinity();
  SUBCASE("one infinite row of five") {
    const auto r = clean(raw({{1, 1}, {2, inf}, {3, 3}, {4, 4}, {5, 5}}, {"Flood-A", "Flood-A", "Flood-A", "Scan-B", "Scan-B"}));
    CHECK(r.table.rows() == 4);
    CHECK(r.dropped_nonfinite == 1);
    CHECK(r.table.values(1, 0) == 3);
  }
  SUBCASE("duplicates") {
    const auto r = clean(raw({{1, 2}, {1, 2}}, {"Flood-A", "Flood-A"}));
    CHECK(r.table.rows() == 1);
    CHECK(r.dropped_duplicate == 1);
  }
  SUBCASE("same features, different label is not a duplicate") {
    CHECK(clean(raw({{1, 2}, {1, 2}}, {"Flood-A", "Scan-B"})).table.rows() == 2);
  }
  SUBCASE("already clean is identity") {
    const auto t = raw({{1, 2}, {3, 4}}, {"Flood-A", "Scan-B"});
    const auto r = clean(t);
    CHECK(r.table.values == t.values);
    CHECK(r.table.labels == t.labels);
    CHECK(r.dropped_nonfinite + r.dropped_duplicate == 0);
  }
  SUBCASE("NaN counts as missing") {
    CHECK(clean(raw({{std::nan(""), 1}}, {"Flood-A"})).dropped_nonfinite == 1);
  }
}

TEST_CASE("encode_labels") {
  const auto& tax = LabelTaxonomy::ciciot2023();
  RawTable t;
  t.schema = make_schema({"a"});
  t.values = Matrix(2, 1, 0.0);
  t.labels = {"BenignTraffic", "DDoS-ICMP_Flood"};
  t.known_label = {true, true};

  SUBCASE("class level uses sorted class names") {
    const auto e = encode_labels(t, LabelLevel::Class, tax);
    const std::vector<std::string> expected{"Benign", "Bruteforce", "DDoS", "DoS", "Mirai", "Recon", "Spoofing", "Web"};
    CHECK(e.labels.names == expected);
    CHECK(e.labels.values == std::vector<int>{0, 2});
  }
  SUBCASE("binary level") {
    CHECK(encode_labels(t, LabelLevel::Binary, tax).labels.values == std::vector<int>{0, 1});
  }
  SUBCASE("unknown label lists offenders") {
    t.labels[1] = "NotARealAttack";
    CHECK_THROWS_WITH_AS(encode_labels(t, LabelLevel::Class, tax), doctest::Contains("NotARealAttack"), Error);
  }
}

TEST_CASE("standardizer") {
  SUBCASE("column {0,2} has mean 1, std 1") {
    const auto s = fit_standardizer(support::matrix({{0.0}, {2.0}}));
    CHECK(s.mean[0] == 1.0);
    CHECK(s.stddev[0] == 1.0);
  }
  SUBCASE("single row") {
    const auto s = fit_standardizer(support::matrix({{3.0, -1.0}}));
    CHECK(s.mean == std::vector<double>{3.0, -1.0});
    CHECK(s.stddev == std::vector<double>{0.0, 0.0});
    CHECK(s.zero_variance() == std::vector<bool>{true, true});
  }
  SUBCASE("empty matrix") {
    CHECK_THROWS_AS(fit_standardizer(support::matrix({}, make_schema({"a"}))), Error);
  }
  SUBCASE("own fitting set gets mean 0, std 1; constant column untouched; round trip") {
    auto m = support::gaussian(200, 3, 11);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      m(r, 0) = 1000.0 + 50.0 * m(r, 0);
      m(r, 2) = 7.0;
    }
    const FeatureMatrix x(support::schema_of_width(3), m);
    const auto stats = fit_standardizer(x);
    const auto z = standardize(x, stats);
    CHECK(z.standardized());
    for (std::size_t c = 0; c < 2; ++c) {
      const auto s = fit_standardizer(z);
      CHECK(std::abs(s.mean[c]) < 1e-9);
      CHECK(std::abs(s.stddev[c] - 1.0) < 1e-9);
    }
    for (std::size_t r = 0; r < m.rows(); ++r) CHECK(z(r, 2) == 7.0);
    const auto back = destandardize(z);
    for (std::size_t i = 0; i < m.data().size(); ++i) {
      CHECK(std::abs(back.data()[i] - m.data()[i]) <= 1e-9 * std::max(1.0, std::abs(m.data()[i])));
    }
  }
  SUBCASE("schema mismatch") {
    const auto a = support::matrix({{1.0}, {2.0}});
    const auto b = support::matrix({{1.0}}, make_schema({"other"}));
    CHECK_THROWS_AS(standardize(b, fit_standardizer(a)), Error);
  }
}

TEST_CASE("drop_zero_variance") {
  SUBCASE("only constant columns go") {
    const auto x = support::matrix({{1, 5, 2}, {2, 5, 2}, {3, 5, 4}});
    const auto d = drop_zero_variance(x, fit_standardizer(x));
    CHECK(d.kept == std::vector<std::size_t>{0, 2});
    CHECK(d.matrix.schema()->names == std::vector<std::string>{"f0", "f2"});
  }
  SUBCASE("all constant") {
    const auto x = support::matrix({{1, 1}, {1, 1}});
    const auto d = drop_zero_variance(x, fit_standardizer(x));
    CHECK(d.matrix.cols() == 0);
    CHECK(d.matrix.schema()->width() == 0);
  }
  SUBCASE("no constants is identity") {
    const auto x = support::matrix({{1, 2}, {2, 1}});
    CHECK(drop_zero_variance(x, fit_standardizer(x)).kept.size() == 2);
  }
}

TEST_CASE("split") {
  SUBCASE("4200 rows at 0.8 -> 3360/840") {
    std::vector<int> labels(4200);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 2100 ? 0 : 1;
    const FeatureMatrix x(support::schema_of_width(1), Matrix(4200, 1, 0.0));
    const auto s = split(x, support::binary(labels), 0.8, 2023, true);
    CHECK(s.train_rows.size() == 3360);
    CHECK(s.test_rows.size() == 840);
  }
  SUBCASE("10 rows, 5 per label -> 4/4 train, 1/1 test") {
    const FeatureMatrix x(support::schema_of_width(1), Matrix(10, 1, 0.0));
    const auto s = split(x, support::binary({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}), 0.8, 3, true);
    CHECK(s.train_y.counts() == std::vector<std::size_t>{4, 4});
    CHECK(s.test_y.counts() == std::vector<std::size_t>{1, 1});
  }
  SUBCASE("disjoint, deterministic, seed-sensitive") {
    auto p = support::planted(300);
    const auto a = split(p.x, p.y, 0.8, 1, true);
    const auto b = split(p.x, p.y, 0.8, 1, true);
    const auto c = split(p.x, p.y, 0.8, 2, true);
    CHECK(a.train_rows == b.train_rows);
    CHECK(a.train_rows != c.train_rows);
    std::set<std::size_t> all(a.train_rows.begin(), a.train_rows.end());
    for (auto r : a.test_rows) CHECK(all.insert(r).second);
    CHECK(all.size() == 300);
    const auto whole = p.y.counts();
    const auto train = a.train_y.counts();
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(std::abs(static_cast<double>(train[l]) - 0.8 * static_cast<double>(whole[l])) <= 1.0);
    }
  }
  SUBCASE("tiny stratum") {
    const FeatureMatrix x(support::schema_of_width(1), Matrix(4, 1, 0.0));
    try {
      split(x, support::binary({0, 0, 0, 1}), 0.8, 1, true);
      FAIL("expected stratification error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Stratification);
    }
  }
  SUBCASE("ratio bounds") {
    const FeatureMatrix x(support::schema_of_width(1), Matrix(4, 1, 0.0));
    CHECK_THROWS_AS(split(x, support::binary({0, 0, 1, 1}), 1.0, 1, false), Error);
  }
}

TEST_CASE("choose_files is a seeded subset and count 0 keeps all") {
  std::vector<std::filesystem::path> files;
  for (int i = 0; i < 30; ++i) files.emplace_back("part-" + std::to_string(i) + ".csv");
  const auto a = choose_files(files, 18, 4);
  CHECK(a.size() == 18);
  CHECK(a == choose_files(files, 18, 4));
  CHECK(choose_files(files, 0, 4).size() == 30);
}

TEST_CASE("sidecar metadata round trip") {
  const auto x = support::matrix({{1, 10}, {3, 30}, {5, 20}});
  const auto stats = fit_standardizer(x);
  KeyValueDoc doc;
  write_schema(doc, *x.schema());
  write_scaler(doc, stats);
  const auto parsed = KeyValueDoc::parse(doc.to_string());
  const auto schema = read_schema(parsed);
  CHECK(schema->names == x.schema()->names);
  const auto back = read_scaler(parsed, schema);
  CHECK(back.mean == stats.mean);
  CHECK(back.stddev == stats.stddev);
}

TEST_CASE("csv written by to_csv loads back") {
  support::TempDir dir("csv");
  const auto x = FeatureMatrix(make_schema({"a", "b"}), Matrix(2, 2, std::vector<double>{0.1, -2.5, 1e-17, 3}));
  write_file(dir / "x.csv", to_csv(x, {"Flood-A", "Scan-B"}));
  const auto t = load_csv(dir / "x.csv", x.schema(), toy_taxonomy());
  CHECK(t.values == x.values());
  CHECK(t.labels == std::vector<std::string>{"Flood-A", "Scan-B"});
}
