// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "purifynet/datasets.hpp"

using namespace purifynet;
using Catch::Matchers::ContainsSubstring;

namespace {

FeatureSchema small_schema() {
    FeatureSchema s;
    s.columns = {{"a", ColumnKind::numeric}, {"b", ColumnKind::numeric}, {"y", ColumnKind::label}};
    return s;
}

FeatureSchema mixed_schema() {
    FeatureSchema s;
    s.columns = {{"dur", ColumnKind::numeric},
                 {"proto", ColumnKind::categorical},
                 {"k", ColumnKind::numeric},
                 {"label", ColumnKind::label},
                 {"diff", ColumnKind::ignore}};
    return s;
}

RecordTable parse(const std::string& text, const FeatureSchema& s) {
    std::istringstream in(text);
    return parse_csv(in, s, "mem.csv");
}

}  // namespace

TEST_CASE("two-row file with two numeric columns parses") {
    const auto t = parse("1,2,normal\n3.5,-4,neptune\n", small_schema());
    REQUIRE(t.size() == 2);
    CHECK(t.numeric[1] == std::vector<double>{3.5, -4.0});
    CHECK(t.labels == std::vector<int>{0, 1});
}

TEST_CASE("header lines are detected and skipped") {
    const auto t = parse("a,b,y\n1,2,normal\n", small_schema());
    CHECK(t.size() == 1);
    FeatureSchema absent = small_schema();
    absent.header = HeaderMode::absent;
    CHECK_THROWS_AS(parse("a,b,y\n1,2,normal\n", absent), DataError);
}

TEST_CASE("wrong column count names the line") {
    CHECK_THROWS_WITH(parse("1,2,normal\n1,2\n", small_schema()), ContainsSubstring("mem.csv:2"));
    CHECK_THROWS_WITH(parse("1,x,normal\n", small_schema()), ContainsSubstring("mem.csv:1"));
}

TEST_CASE("label mapping modes") {
    FeatureSchema binary = small_schema();
    binary.label_mode = LabelMode::binary;
    CHECK(parse("1,2,0\n1,2,1\n", binary).labels == std::vector<int>{0, 1});
    CHECK_THROWS_WITH(parse("1,2,2\n", binary), ContainsSubstring("unknown label"));
    FeatureSchema closed = small_schema();
    closed.malicious_labels = {"neptune", "smurf"};
    CHECK(parse("1,2,smurf\n", closed).labels == std::vector<int>{1});
    CHECK_THROWS_WITH(parse("1,2,mystery\n", closed), ContainsSubstring("unknown label 'mystery'"));
}

TEST_CASE("schema validation") {
    FeatureSchema s = small_schema();
    s.columns.push_back({"y2", ColumnKind::label});
    CHECK_THROWS_AS(s.validate(), DataError);
    FeatureSchema none;
    none.columns = {{"y", ColumnKind::label}, {"z", ColumnKind::ignore}};
    CHECK_THROWS_AS(none.validate(), DataError);
    const FeatureSchema from_list = FeatureSchema::from_json(Json::parse(
        R"([{"name":"a","kind":"numeric"},{"name":"p","kind":"categorical"},{"name":"y","kind":"label"}])"));
    CHECK(from_list.columns.size() == 3);
    CHECK(from_list.label_column() == 2);
    CHECK(FeatureSchema::from_json(from_list.to_json()).columns.size() == 3);
}

TEST_CASE("built-in schemas have the expected layout") {
    const auto nsl = nslkdd_schema();
    nsl.validate();
    CHECK(nsl.columns.size() == 43);
    CHECK(nsl.columns[41].kind == ColumnKind::label);
    CHECK(nsl.columns[42].kind == ColumnKind::ignore);
    std::size_t cats = 0;
    for (const auto& c : nsl.columns) cats += c.kind == ColumnKind::categorical;
    CHECK(cats == 3);
    const auto unsw = unswnb15_schema();
    unsw.validate();
    CHECK(unsw.label_mode == LabelMode::binary);
    CHECK(unsw.columns.front().kind == ColumnKind::ignore);
}

TEST_CASE("NSL-KDD attack names map to malicious") {
    std::string row = "0,tcp,http,SF";
    for (int i = 0; i < 37; ++i) row += ",0";
    const auto t = parse(row + ",neptune,21\n" + row + ",normal,20\n", nslkdd_schema());
    CHECK(t.labels == std::vector<int>{1, 0});
    CHECK(t.categorical[0] == std::vector<std::string>{"tcp", "http", "SF"});
}

TEST_CASE("fit_encoder learns vocabularies in first-appearance order and numeric ranges") {
    const auto t = parse("0,tcp,5,normal,1\n10,udp,5,x,2\n4,tcp,5,normal,3\n", mixed_schema());
    const EncoderState e = fit_encoder(t);
    CHECK(e.vocabularies[0] == std::vector<std::string>{"tcp", "udp"});
    CHECK(e.numeric_range[0] == std::pair{0.0, 10.0});
    CHECK(e.numeric_range[1] == std::pair{5.0, 6.0});
    CHECK(e.feature_count() == 4);
    CHECK(EncoderState::from_json(e.to_json()) == e);
    CHECK_THROWS_AS(fit_encoder(RecordTable{}), DataError);
}

TEST_CASE("transform scales, clamps and one-hot encodes") {
    const auto train = parse("0,tcp,5,normal,1\n10,udp,5,x,2\n", mixed_schema());
    const EncoderState e = fit_encoder(train);
    const Dataset d = transform(train, e);
    CHECK(d.feature_names == std::vector<std::string>{"dur", "k", "proto=tcp", "proto=udp"});
    CHECK(d.features(0, 0) == 0.0);
    CHECK(d.features(1, 0) == 1.0);
    CHECK(d.features(0, 1) == 0.0);
    CHECK(d.features(1, 1) == 0.0);
    CHECK(d.features(0, 2) == 1.0);
    CHECK(d.features(1, 3) == 1.0);

    const EncoderState before = e;
    const auto test = parse("25,icmp,7,normal,1\n-3,udp,4,x,1\n", mixed_schema());
    const Dataset dt = transform(test, e);
    CHECK(e == before);
    CHECK(dt.features(0, 0) == 1.0);
    CHECK(dt.features(1, 0) == 0.0);
    CHECK(dt.features(0, 2) + dt.features(0, 3) == 0.0);
    CHECK(dt.features(1, 3) == 1.0);
}

TEST_CASE("transformed features stay in the unit box with at most one hot per block") {
    Rng rng(1);
    std::ostringstream text;
    const char* protos[] = {"tcp", "udp", "icmp"};
    for (int i = 0; i < 300; ++i) {
        text << rng.normal(0, 100) << "," << protos[rng.uniform_int(0, 2)] << ",3," << (i % 2 ? "normal" : "bad")
             << ",0\n";
    }
    const auto t = parse(text.str(), mixed_schema());
    const Dataset d = transform(t, fit_encoder(t));
    for (std::size_t r = 0; r < d.size(); ++r) {
        double block = 0.0;
        for (std::size_t c = 0; c < d.feature_count(); ++c) {
            REQUIRE(d.features(r, c) >= 0.0);
            REQUIRE(d.features(r, c) <= 1.0);
            if (c >= 2) block += d.features(r, c);
        }
        REQUIRE(block <= 1.0);
    }
    CHECK(d.features.all_finite());
}

TEST_CASE("load_csv reads from disk and reports the path") {
    const auto path = std::filesystem::temp_directory_path() / "purifynet_test_small.csv";
    {
        std::ofstream out(path);
        out << "a,b,y\n1,2,normal\n3,4,smurf\n5,6\n";
    }
    CHECK_THROWS_WITH(load_csv(path, small_schema()), ContainsSubstring("purifynet_test_small.csv:4"));
    {
        std::ofstream out(path);
        out << "1,2,normal\r\n3,4,smurf\r\n";
    }
    CHECK(load_csv(path, small_schema()).size() == 2);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_csv(path, small_schema()), DataError);
}

TEST_CASE("split is disjoint, complete and reproducible") {
    SyntheticConfig cfg;
    cfg.rows = 200;
    cfg.features = 3;
    const Dataset d = make_synthetic(cfg);
    Rng a(5), b(5);
    const auto [tr, te] = split(d, 0.8, 0.2, a);
    const auto [tr2, te2] = split(d, 0.8, 0.2, b);
    CHECK(tr.size() == 160);
    CHECK(te.size() == 40);
    CHECK(tr.features == tr2.features);
    CHECK(te.labels == te2.labels);
    Rng c(5);
    const auto [all, none] = split(d, 1.0, 0.0, c);
    CHECK(all.size() == 200);
    CHECK(none.size() == 0);
    CHECK(none.feature_count() == 3);
    CHECK_THROWS_AS(split(d, 0.7, 0.2, c), RangeError);
}

TEST_CASE("stratified subsample preserves the class ratio") {
    Dataset d;
    d.features = DenseTensor(1000, 2);
    for (std::size_t i = 0; i < 1000; ++i) {
        d.labels.push_back(i % 2 == 0 ? 1 : 0);
        d.features(i, 0) = static_cast<double>(i) / 1000.0;
    }
    Rng rng(3);
    const Dataset s = subsample(d, 100, true, rng);
    const auto counts = s.class_counts();
    CHECK(counts[0] >= 49);
    CHECK(counts[0] <= 51);
    CHECK(counts[0] + counts[1] == 100);
    std::set<double> ids;
    for (std::size_t i = 0; i < s.size(); ++i) ids.insert(s.features(i, 0));
    CHECK(ids.size() == 100);
    CHECK_THROWS_AS(subsample(d, 1001, true, rng), RangeError);
    CHECK(subsample(d, 10, false, rng).size() == 10);
}

TEST_CASE("synthetic data is reproducible and bounded") {
    SyntheticConfig cfg;
    cfg.rows = 500;
    const Dataset a = make_synthetic(cfg), b = make_synthetic(cfg);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    for (double v : a.features.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    const auto counts = a.class_counts();
    CHECK(counts[1] > 200);
    CHECK(counts[1] < 300);
    cfg.seed = 1;
    CHECK_FALSE(make_synthetic(cfg).features == a.features);
}

TEST_CASE("dataset JSON round-trip") {
    SyntheticConfig cfg;
    cfg.rows = 20;
    const Dataset d = make_synthetic(cfg);
    const Dataset back = dataset_from_json(Json::parse(dataset_to_json(d).dump()));
    CHECK(back.features == d.features);
    CHECK(back.labels == d.labels);
    CHECK(back.feature_names == d.feature_names);
}
