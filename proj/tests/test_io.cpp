#include "tosgp/tosgp.hpp"
#include "tosgp/synthetic.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tosgp;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("tosgp_io_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dataset small_plates(std::size_t n, std::uint64_t seed = 1) {
    synthetic::PlateOptions po;
    po.samples = n;
    po.min_nodes = 20;
    po.max_nodes = 30;
    po.seed = seed;
    return synthetic::plate_dataset(po);
}

TrainOutput small_model(const Dataset& data) {
    ReferenceSpec spec;
    spec.size = 15;
    const auto ref = build_reference(spec, training_measures(data.samples, 0));
    TrainConfig cfg;
    cfg.n_proj = 10;
    cfg.n_quantiles = 20;
    cfg.gp_restarts = 2;
    return train(data, ref, cfg);
}

const char* kToyGraph = R"({"format": "tosgp-graph", "version": 1, "node_count": 3, "feature_dim": 2,
  "features": [0, 0, 1, 0, 0, 1], "edges": [[0, 1], [1, 2]]})";

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(TOSGP_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Dataset, LoadsToyManifest) {
    TempDir dir("toy");
    write_file(dir.path() / "g.json", kToyGraph);
    write_file(dir.path() / "y.txt", "# u v\n1 10\n2 20\n3 30\n");
    write_file(dir.path() / "m.json", R"({"schema_version": 1, "dataset_id": "toy", "fields": ["u", "v"],
      "samples": [{"id": "a", "graph": "g.json", "signals": "y.txt", "scalars": [0.5]}]})");
    const Dataset d = io::load_dataset(dir.path() / "m.json");
    ASSERT_EQ(d.samples.size(), 1u);
    EXPECT_EQ(d.id, "toy");
    EXPECT_EQ(d.samples[0].graph.node_count, 3);
    EXPECT_EQ(d.samples[0].graph.edges.size(), 2u);
    EXPECT_EQ(d.samples[0].signals[1](2), 30.0);
    EXPECT_EQ(d.samples[0].scalars(0), 0.5);
}

TEST(Dataset, LengthMismatchNamesSample) {
    TempDir dir("mismatch");
    write_file(dir.path() / "g.json", kToyGraph);
    write_file(dir.path() / "y.txt", "1\n2\n");
    write_file(dir.path() / "m.json", R"({"schema_version": 1, "dataset_id": "toy", "fields": ["u"],
      "samples": [{"id": "bad-one", "graph": "g.json", "signals": "y.txt"}]})");
    try {
        io::load_dataset(dir.path() / "m.json");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
    }
}

TEST(Dataset, MissingFileReportsPath) {
    TempDir dir("missing");
    write_file(dir.path() / "m.json", R"({"schema_version": 1, "dataset_id": "toy", "fields": ["u"],
      "samples": [{"id": "a", "graph": "nowhere.json", "signals": "y.txt"}]})");
    try {
        io::load_dataset(dir.path() / "m.json");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("nowhere.json"), std::string::npos);
    }
}

TEST(Dataset, ParseErrorsCarryLine) {
    TempDir dir("lines");
    write_file(dir.path() / "y.txt", "1\n2\nx\n");
    try {
        io::read_columns(dir.path() / "y.txt");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("y.txt:3"), std::string::npos);
    }
    write_file(dir.path() / "bad.json", "{\n \"a\": 1,\n}\n");
    EXPECT_THROW(io::parse_json(read_file(dir.path() / "bad.json"), "bad.json"), DataError);
}

TEST(Dataset, InvalidGraphRejected) {
    TempDir dir("invalid");
    write_file(dir.path() / "g.json", R"({"format": "tosgp-graph", "version": 1, "node_count": 2, "feature_dim": 1,
      "features": [0, 1], "edges": [[0, 5]]})");
    write_file(dir.path() / "m.json", R"({"schema_version": 1, "dataset_id": "toy", "fields": ["u"],
      "samples": [{"id": "a", "graph": "g.json"}]})");
    EXPECT_THROW(io::load_dataset(dir.path() / "m.json", false), DataError);
}

TEST(Dataset, SaveLoadRoundTrip) {
    TempDir dir("roundtrip");
    const Dataset d = small_plates(3);
    io::save_dataset(dir.path() / "m.json", d);
    const Dataset back = io::load_dataset(dir.path() / "m.json");
    ASSERT_EQ(back.samples.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.samples[i].graph.features, d.samples[i].graph.features);
        EXPECT_EQ(back.samples[i].graph.edges, d.samples[i].graph.edges);
        EXPECT_EQ(back.samples[i].signals[0], d.samples[i].signals[0]);
        EXPECT_EQ(back.samples[i].scalars, d.samples[i].scalars);
        EXPECT_EQ(fingerprint(back.samples[i]), fingerprint(d.samples[i]));
    }
}

TEST(Archive, Base64RoundTrip) {
    for (const std::string s : {"", "f", "fo", "foo", "foob", "fooba", "foobar"}) {
        const std::string enc = detail::base64_encode(reinterpret_cast<const unsigned char*>(s.data()), s.size());
        EXPECT_EQ(detail::base64_decode(enc), s);
    }
    EXPECT_EQ(detail::base64_encode(reinterpret_cast<const unsigned char*>("foobar"), 6), "Zm9vYmFy");
}

TEST(Archive, SaveLoadPredictsIdentically) {
    TempDir dir("archive");
    const Dataset data = small_plates(8);
    const auto trained = small_model(data);
    save_model(dir.path() / "m.tosgp", trained.model);
    const TrainedSurrogate loaded = load_model(dir.path() / "m.tosgp");
    EXPECT_EQ(serialize_model(loaded), serialize_model(trained.model));

    Rng rng(3);
    const AttributedGraph g = synthetic::random_geometric_graph(rng, 25, 1.0, 1.1);
    const auto a = predict(trained.model, g, Vector::Constant(1, 1.3));
    const auto b = predict(loaded, g, Vector::Constant(1, 1.3));
    EXPECT_EQ(a[0].signal, b[0].signal);
    EXPECT_EQ(a[0].stddev, b[0].stddev);
}

TEST(Archive, IdenticalRunsGiveIdenticalBytes) {
    const Dataset data = small_plates(6);
    EXPECT_EQ(serialize_model(small_model(data).model), serialize_model(small_model(data).model));
}

TEST(Archive, CorruptionIsDetected) {
    const std::string text = serialize_model(small_model(small_plates(5)).model);
    EXPECT_THROW(deserialize_model(text.substr(0, text.size() / 2)), ChecksumError);
    std::string flipped = text;
    flipped[flipped.size() - 10] = flipped[flipped.size() - 10] == 'A' ? 'B' : 'A';
    EXPECT_THROW(deserialize_model(flipped), ChecksumError);
    std::string newer = text;
    newer.replace(newer.find(" 1\n"), 3, " 2\n");
    EXPECT_THROW(deserialize_model(newer), VersionError);
    EXPECT_THROW(deserialize_model("not an archive"), DataError);
}

TEST(Export, TableColumns) {
    AttributedGraph g;
    g.node_count = 2;
    g.features = Matrix::Zero(2, 2);
    g.features(1, 0) = 1.0;
    g.edges = {{0, 1}};
    PredictionResult r;
    r.field = "u";
    r.signal = Vector::Constant(2, 1.5);
    r.stddev = Vector::Constant(2, 0.25);
    const std::string plain = export_table(r, g, std::nullopt);
    EXPECT_EQ(plain, "node_id,x0,x1,prediction,std\n0,0,0,1.5,0.25\n1,1,0,1.5,0.25\n");
    const std::string with_truth = export_table(r, g, Vector::Constant(2, 2.0));
    EXPECT_EQ(with_truth.substr(0, with_truth.find('\n')), "node_id,x0,x1,truth,prediction,abs_error,std");
    EXPECT_NE(with_truth.find("0,0,0,2,1.5,0.5,0.25"), std::string::npos);

    AttributedGraph empty;
    empty.features = Matrix(0, 2);
    PredictionResult none;
    none.signal = Vector(0);
    none.stddev = Vector(0);
    EXPECT_EQ(export_table(none, empty, std::nullopt), "node_id,x0,x1,prediction,std\n");
    EXPECT_THROW(export_table(r, empty, std::nullopt), DataError);
}

TEST(Export, VtkStructure) {
    AttributedGraph g;
    g.node_count = 3;
    g.features = Matrix::Zero(3, 2);
    g.edges = {{0, 1}, {1, 2}};
    PredictionResult r;
    r.field = "u";
    r.signal = Vector::Ones(3);
    r.stddev = Vector::Zero(3);
    const std::string vtk = export_vtk(r, g, std::nullopt);
    EXPECT_EQ(vtk.rfind("# vtk DataFile Version 3.0", 0), 0u);
    EXPECT_NE(vtk.find("POINTS 3 double"), std::string::npos);
    EXPECT_NE(vtk.find("CELLS 2 6"), std::string::npos);
    EXPECT_NE(vtk.find("POINT_DATA 3"), std::string::npos);
    EXPECT_NE(vtk.find("SCALARS std double 1"), std::string::npos);
    EXPECT_EQ(parse_export_format("vtk"), ExportFormat::Vtk);
    EXPECT_THROW(parse_export_format("xlsx"), DataError);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
    const auto c = parse_config(io::json::parse(R"({"lambda": 0.01, "wl_iters": 2, "min_q": 3,
        "reference": {"strategy": "uniform-grid", "lower": [0, 0], "upper": [1, 1], "resolution": [4, 4]},
        "grid": {"lambdas": [0.1]}})"),
                                "cfg");
    EXPECT_EQ(c.train.lambda, 0.01);
    EXPECT_EQ(c.train.wl_iters, 2);
    EXPECT_EQ(c.train.pca.min_components, 3);
    EXPECT_EQ(c.reference.strategy, ReferenceStrategy::UniformGrid);
    EXPECT_EQ(c.grid_lambdas, std::vector<double>{0.1});
    try {
        parse_config(io::json::parse(R"({"lamda": 0.01})"), "cfg.json");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("lamda"), std::string::npos);
    }
    EXPECT_THROW(parse_config(io::json::parse(R"({"lambda": -1})"), "cfg"), DataError);
    EXPECT_THROW(parse_config(io::json::parse(R"({"reference": {"sise": 3}})"), "cfg"), DataError);
}

TEST(Cli, EndToEndCommands) {
    TempDir dir("cli");
    const fs::path p = dir.path();
    const fs::path log = p / "log.txt";
    ASSERT_EQ(run_cli("make-synthetic --samples 8 --min-nodes 20 --max-nodes 30 --out " + (p / "data/m.json").string(), log), 0)
        << read_file(log);
    write_file(p / "cfg.json", R"({"reference": {"size": 12}, "n_proj": 8, "n_quantiles": 20, "gp_restarts": 1})");
    const std::string common = " --manifest " + (p / "data/m.json").string() + " --config " + (p / "cfg.json").string();

    ASSERT_EQ(run_cli("build-reference" + common + " --out " + (p / "ref.json").string(), log), 0) << read_file(log);
    EXPECT_EQ(io::read_reference(p / "ref.json").size(), 12);

    ASSERT_EQ(run_cli("train" + common + " --reference " + (p / "ref.json").string() + " --lambda 1e-3 --out " +
                          (p / "model.tosgp").string(),
                      log),
              0)
        << read_file(log);
    EXPECT_NO_THROW(load_model(p / "model.tosgp"));

    const std::string model = " --model " + (p / "model.tosgp").string() + " --manifest " + (p / "data/m.json").string();
    ASSERT_EQ(run_cli("predict" + model + " --out " + (p / "pred").string(), log), 0) << read_file(log);
    EXPECT_EQ(io::read_columns(p / "pred/s0.txt").cols(), 2);

    ASSERT_EQ(run_cli("evaluate" + model + " --out " + (p / "eval.json").string(), log), 0) << read_file(log);
    const auto report = io::json::parse(read_file(p / "eval.json"));
    EXPECT_GE(report["fields"][0]["total"].get<double>(), 0.0);

    ASSERT_EQ(run_cli("export" + model + " --sample s1 --format vtk --out " + (p / "s1.vtk").string(), log), 0)
        << read_file(log);
    EXPECT_EQ(read_file(p / "s1.vtk").rfind("# vtk", 0), 0u);

    ASSERT_EQ(run_cli("grid-search" + common + " --lambda 1e-3 --lambda 1e-2 --out " + (p / "grid.json").string(), log), 0)
        << read_file(log);
    EXPECT_EQ(io::json::parse(read_file(p / "grid.json"))["ranking"].size(), 2u);

    write_file(p / "tight.json", R"({"sinkhorn_max_iter": 1, "sinkhorn_tol": 1e-15})");
    EXPECT_EQ(run_cli("train --manifest " + (p / "data/m.json").string() + " --config " + (p / "tight.json").string() +
                          " --reference " + (p / "ref.json").string() + " --out " + (p / "x.tosgp").string(),
                      log),
              3);
    EXPECT_NE(read_file(log).find("no convergence"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli_codes");
    const fs::path log = dir.path() / "log.txt";
    EXPECT_EQ(run_cli("", log), 1);
    EXPECT_EQ(run_cli("train --bogus", log), 1);
    EXPECT_EQ(run_cli("train --manifest " + (dir.path() / "missing.json").string() + " --out x", log), 2);
    EXPECT_NE(read_file(log).find("missing.json"), std::string::npos);
    write_file(dir.path() / "cfg.json", R"({"unknown_key": 1})");
    EXPECT_EQ(run_cli("train --manifest m.json --config " + (dir.path() / "cfg.json").string() + " --out x", log), 2);
    EXPECT_NE(read_file(log).find("unknown_key"), std::string::npos);
}
