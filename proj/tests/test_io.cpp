#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace nsgp;
using namespace nsgp::testing;
namespace fs = std::filesystem;

namespace {

std::string parse_error_of(std::string_view text) {
    try {
        io::parse_ensemble_csv(text, "f.csv");
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("nsgp_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(ParseEnsemble, WellFormed) {
    const auto f = io::parse_ensemble_csv("x1,x2,y\n0,1,2\n0.5,-1,3\n1,0,4.5\n");
    EXPECT_EQ(f.size(), 3);
    EXPECT_EQ(f.dim(), 2);
    EXPECT_TRUE(f.has_response);
    EXPECT_EQ(f.X(1, 1), -1.0);
    EXPECT_EQ(f.y(2), 4.5);
}

TEST(ParseEnsemble, DesignOnly) {
    const auto f = io::parse_ensemble_csv("x1,x2\n0,1\n0.5,-1\n");
    EXPECT_FALSE(f.has_response);
    EXPECT_EQ(f.dim(), 2);
    EXPECT_EQ(f.y.size(), 0);
}

TEST(ParseEnsemble, ToleratesCrlfBomAndSpaces) {
    const auto f = io::parse_ensemble_csv("\xEF\xBB\xBFx1, y\r\n 1e-3 ,+2\r\n4,5\r\n\r\n");
    EXPECT_EQ(f.size(), 2);
    EXPECT_EQ(f.X(0, 0), 1e-3);
    EXPECT_EQ(f.y(0), 2.0);
}

TEST(ParseEnsemble, TextCellCitesRowAndColumn) {
    const std::string msg = parse_error_of("x1,x2,y\n0,1,2\n0.5,abc,3\n");
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x2"), std::string::npos) << msg;
}

TEST(ParseEnsemble, MalformedHeaderNamesColumn) {
    const std::string msg = parse_error_of("x1,z,y\n0,1,2\n");
    EXPECT_NE(msg.find("'z'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x2"), std::string::npos) << msg;
}

TEST(ParseEnsemble, Errors) {
    EXPECT_FALSE(parse_error_of("").empty());
    EXPECT_FALSE(parse_error_of("x1,y\n").empty());
    EXPECT_FALSE(parse_error_of("x1,y\n1,2,3\n").empty());
    EXPECT_FALSE(parse_error_of("x1,y\n1,nan\n").empty());
    EXPECT_FALSE(parse_error_of("x1,y\n1,2\n\n3,4\n").empty());
    EXPECT_FALSE(parse_error_of("x1,y\n1,1e400\n").empty());
    EXPECT_FALSE(parse_error_of("y\n1\n").empty());
}

TEST(ParseEnsemble, CustomResponseName) {
    const auto f = io::parse_ensemble_csv("x1,e\n1,2\n", "r.csv", "e");
    EXPECT_TRUE(f.has_response);
    EXPECT_EQ(f.y(0), 2.0);
}

TEST(LoadEnsemble, StandardizesAndRejectsConstantResponse) {
    const fs::path d = scratch_dir("load");
    io::atomic_write(d / "ok.csv", "x1,x2,y\n0,10,1\n1,20,2\n0.5,15,3\n");
    const auto le = io::load_ensemble(d / "ok.csv");
    EXPECT_EQ(le.ensemble.size(), 3);
    EXPECT_EQ(le.ensemble.X(2, 1), 0.0);
    EXPECT_NEAR(le.ensemble.F.mean(), 0.0, 1e-15);
    io::atomic_write(d / "flat.csv", "x1,y\n0,1\n1,1\n");
    EXPECT_THROW(io::load_ensemble(d / "flat.csv"), DomainError);
    io::atomic_write(d / "design.csv", "x1\n0\n1\n");
    EXPECT_THROW(io::load_ensemble(d / "design.csv"), ParseError);
    EXPECT_THROW(io::load_ensemble(d / "missing.csv"), ArgumentError);
    EXPECT_THROW(io::load_ensemble(d / "ok.csv", std::pair{Vector::Zero(1), Vector::Ones(1)}), ArgumentError);
}

TEST(CsvText, RoundTripsExactly) {
    std::mt19937_64 rng(1);
    Matrix M = uniform_points(30, 3, rng, -1e6, 1e6);
    M(0, 0) = 0.1;
    M(1, 1) = 5e-324;
    M(2, 2) = -0.0;
    const auto f = io::parse_ensemble_csv(io::csv_text({"x1", "x2", "y"}, M));
    EXPECT_EQ(f.X, M.leftCols(2));
    EXPECT_EQ(f.y, M.col(2));
}

TEST(CsvText, HeaderWidthChecked) { EXPECT_THROW(io::csv_text({"x1"}, Matrix::Zero(1, 2)), ArgumentError); }

TEST(FormatDouble, Shortest) {
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_EQ(io::format_double(2.0), "2");
    EXPECT_EQ(io::format_double(-1.5e-10), "-1.5e-10");
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(io::hex64(0xaf63dc4c8601ec8cull), "af63dc4c8601ec8c");
}

TEST(AtomicWrite, ReplacesWholeFile) {
    const fs::path d = scratch_dir("atomic");
    io::atomic_write(d / "a.txt", "first version, longer");
    io::atomic_write(d / "a.txt", "second");
    EXPECT_EQ(io::read_file(d / "a.txt"), "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(d)) ++entries;
    EXPECT_EQ(entries, 1u);
}
