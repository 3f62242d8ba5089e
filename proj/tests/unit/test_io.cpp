#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "firelgcp/error.hpp"
#include "firelgcp/io.hpp"

using namespace firelgcp;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("firelgcp_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 123456789.0})
    EXPECT_EQ(std::stod(io::format_double(v)), v);
}

TEST(Io, CountsRoundTrip) {
  const fs::path d = scratch("counts");
  const std::vector<CountRecord> in{{0, 1, 3, 4.0, 1}, {0, 2, 0, 12.0, 3}, {7, 5, 1, 4.0, 1}};
  io::write_counts(d / "c.csv", in, true);
  const auto out = io::read_counts(d / "c.csv");
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].cell_id, in[i].cell_id);
    EXPECT_EQ(out[i].month, in[i].month);
    EXPECT_EQ(out[i].count, in[i].count);
    EXPECT_EQ(out[i].exposure, in[i].exposure);
    EXPECT_EQ(out[i].n_aggregated, in[i].n_aggregated);
  }
}

TEST(Io, CountsWithoutExposureUseDefault) {
  const fs::path d = scratch("counts2");
  std::ofstream(d / "c.csv") << "cell_id,month_index,count\n3,4,2\n";
  const auto out = io::read_counts(d / "c.csv", 6.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].exposure, 6.0);
}

TEST(Io, NegativeCountRejected) {
  const fs::path d = scratch("counts3");
  std::ofstream(d / "c.csv") << "cell_id,month_index,count\n3,4,-2\n";
  EXPECT_THROW(io::read_counts(d / "c.csv"), ConfigError);
}

TEST(Io, GridRoundTripKeepsMask) {
  const fs::path d = scratch("grid");
  GridSpec g = GridSpec::full(1.0, 2.0, 2.0, 2, 3);
  g.active = {true, false, true, true, true, false};
  io::write_grid(d / "g.asc", g);
  const GridSpec h = io::read_grid(d / "g.asc");
  EXPECT_EQ(h.n_rows, 2);
  EXPECT_EQ(h.n_cols, 3);
  EXPECT_EQ(h.origin_x, 1.0);
  EXPECT_EQ(h.origin_y, 2.0);
  for (int c = 0; c < 6; ++c) EXPECT_EQ(h.is_active(c), g.is_active(c)) << c;
}

TEST(Io, RasterFormatsAgree) {
  const fs::path d = scratch("raster");
  FineRaster r;
  r.values.resize(2, 3);
  r.values << 1, 2, 3, 4, -9999, 6;
  r.origin_x = 0.0;
  r.origin_y = 0.0;
  r.resolution = 0.5;
  io::write_ascii_raster(d / "r.asc", r);
  const FineRaster a = io::read_raster(d / "r.asc");
  ASSERT_EQ(a.values.rows(), 2);
  EXPECT_EQ(a.values(0, 0), 1.0);
  EXPECT_EQ(a.values(1, 2), 6.0);
  EXPECT_TRUE(a.is_missing(a.values(1, 1)));
  std::ofstream(d / "r.csv") << "x,y,value\n0.25,0.25,1\n0.75,0.25,2\n1.25,0.25,3\n0.25,0.75,4\n1.25,0.75,6\n";
  const FineRaster c = io::read_raster(d / "r.csv");
  ASSERT_EQ(c.values.rows(), 2);
  ASSERT_EQ(c.values.cols(), 3);
  EXPECT_EQ(c.values(1, 0), 4.0);
  EXPECT_TRUE(c.is_missing(c.values(1, 1)));
}

TEST(Io, KeyValuesRejectDuplicatesAndUnknown) {
  const fs::path d = scratch("kv");
  std::ofstream(d / "a.cfg") << "# comment\nx = 1\ny = two words\n";
  const auto kv = io::read_key_values(d / "a.cfg");
  EXPECT_EQ(kv.at("y"), "two words");
  EXPECT_THROW(io::reject_unknown_keys(kv, {"x"}, "a.cfg"), ConfigError);
  std::ofstream(d / "b.cfg") << "x = 1\nx = 2\n";
  EXPECT_THROW(io::read_key_values(d / "b.cfg"), ConfigError);
}

TEST(Io, VariogramModelRoundTrip) {
  const fs::path d = scratch("vario");
  const auto m = VariogramModel::product_sum({4.0, 30.0, 0.5}, {2.0, 3.0, 0.2}, 0.1);
  io::write_variogram_model(d / "m.txt", m, "TEMP", 1.5);
  const auto n = io::read_variogram_model(d / "m.txt");
  for (double h : {0.0, 5.0, 50.0})
    for (int u : {0, 1, 6}) EXPECT_EQ(n(h, u), m(h, u));
}

TEST(Io, MeshRoundTrip) {
  const fs::path d = scratch("mesh");
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  io::write_mesh(d / "v.csv", d / "t.csv", m);
  const Mesh n = io::read_mesh(d / "v.csv", d / "t.csv");
  ASSERT_EQ(n.vertices.size(), 4u);
  EXPECT_EQ(n.vertices[2].x, 1.0);
  EXPECT_EQ(n.triangles, m.triangles);
}

TEST(Io, Sha256OfKnownBytes) {
  const fs::path d = scratch("sha");
  std::ofstream(d / "abc", std::ios::binary) << "abc";
  EXPECT_EQ(io::sha256_file(d / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
