#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "w1a8/tensor_io.hpp"

using namespace w1a8;

TEST(Dump, RoundTripsEveryType) {
  testutil::TempDir dir;
  std::mt19937_64 rng(3);
  ActTensor a(Shape{3, 4, 5});
  for (auto& v : a.data()) v = static_cast<uint8_t>(rng());
  FxTensor f{Tensor<int64_t>(Shape{2, 3, 1}), signed_q(28, 19)};
  for (auto& v : f.values.data()) v = static_cast<int64_t>(rng()) >> 17;
  FloatTensor d(Shape{1, 2, 2}, std::vector<double>{0.5, -1e300, 3.25, 1e-310});

  write_dump(dir.path(), "a", a);
  write_dump(dir.path(), "f", f);
  write_dump(dir.path() / "nested", "d", d);
  EXPECT_EQ(read_u8_dump(dir.path(), "a"), a);
  EXPECT_EQ(read_fx_dump(dir.path(), "f"), f);
  EXPECT_EQ(read_f64_dump(dir.path() / "nested", "d"), d);

  const DumpHeader h = read_dump_header(dir.path(), "f");
  EXPECT_EQ(h.name, "f");
  EXPECT_EQ(h.shape, (Shape{2, 3, 1}));
  EXPECT_EQ(h.type, DumpType::kI64);
  ASSERT_TRUE(h.fmt.has_value());
  EXPECT_EQ(h.fmt->to_string(), "Q28.19");
  EXPECT_FALSE(read_dump_header(dir.path(), "a").fmt.has_value());
  EXPECT_EQ(std::filesystem::file_size(dir / "f.bin"), 6u * 8);
}

TEST(Dump, Errors) {
  testutil::TempDir dir;
  write_dump(dir.path(), "a", ActTensor(Shape{1, 2, 2}, 7));
  EXPECT_THROW(read_fx_dump(dir.path(), "a"), TensorIoError);    // wrong type
  EXPECT_THROW(read_u8_dump(dir.path(), "zz"), TensorIoError);   // missing
  write_file_bytes(dir / "a.bin", std::vector<uint8_t>(3));
  EXPECT_THROW(read_u8_dump(dir.path(), "a"), TensorIoError);    // truncated
  write_dump(dir.path(), "b", ActTensor(Shape{1, 1, 1}));
  testutil::replace_once(dir / "b.json", "\"u8\"", "\"u16\"");
  EXPECT_THROW(read_dump_header(dir.path(), "b"), TensorIoError);
  write_dump(dir.path(), "c", ActTensor(Shape{1, 1, 1}));
  testutil::replace_once(dir / "c.json", "{", "[");
  EXPECT_THROW(read_dump_header(dir.path(), "c"), TensorIoError);
  write_text_file(dir / "e.json",
                  "{\"name\":\"e\",\"shape\":[1,1,1],\"dtype\":\"i64\"}\n");
  write_file_bytes(dir / "e.bin", std::vector<uint8_t>(8));
  EXPECT_THROW(read_fx_dump(dir.path(), "e"), TensorIoError);    // no format
}

TEST(HeadWords, LittleEndianFile) {
  testutil::TempDir dir;
  const std::vector<int32_t> words{1, -2, 0x12345678};
  write_head_words(dir / "h.bin", words);
  const auto bytes = read_file_bytes(dir / "h.bin");
  ASSERT_EQ(bytes.size(), 12u);
  EXPECT_EQ(bytes[0], 1);
  EXPECT_EQ(bytes[4], 0xFE);
  EXPECT_EQ(bytes[7], 0xFF);
  EXPECT_EQ(bytes[8], 0x78);
  EXPECT_EQ(bytes[11], 0x12);
  EXPECT_EQ(read_head_words(dir / "h.bin"), words);
  write_file_bytes(dir / "bad.bin", std::vector<uint8_t>(5));
  EXPECT_THROW(read_head_words(dir / "bad.bin"), TensorIoError);
}

TEST(HeadWords, SerialOrderIsCellMajor) {
  FxTensor head{Tensor<int64_t>(Shape{75, 10, 10}), kHeadOut};
  for (size_t i = 0; i < head.values.size(); ++i) head.values.data()[i] = static_cast<int64_t>(i) - 30000;
  const auto serial = head_to_serial(head);
  ASSERT_EQ(serial.size(), 7500u);
  // Word k belongs to cell k/75 and channel k%75.
  for (size_t k = 0; k < serial.size(); k += 37) {
    const int cell = static_cast<int>(k / 75);
    EXPECT_EQ(serial[k], head.values.at(static_cast<int>(k % 75), cell / 10, cell % 10));
  }
  EXPECT_EQ(serial_to_head(serial, head.values.shape()), head);
  EXPECT_THROW(serial_to_head(serial, Shape{75, 10, 9}), TensorIoError);
}
