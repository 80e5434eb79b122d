#include <gtest/gtest.h>

#include <filesystem>

#include "steraser/image_io.hpp"
#include "test_util.hpp"

using namespace ste;
using ste::testing::random_image;

namespace {

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "steraser_image_io_test";
  std::filesystem::create_directories(d);
  return d;
}

std::string ppm_2x2(std::size_t payload) { return "P6 2 2 255\n" + std::string(payload, '\x07'); }

}  // namespace

TEST(Ppm, DecodesMinimalHeader) {
  const auto img = decode_ppm(ppm_2x2(12));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  for (auto v : img.pixels) EXPECT_EQ(v, 7);
}

TEST(Ppm, HeaderCommentsAndWhitespace) {
  const std::string bytes = std::string("P6\n# comment\n3\t1\n# another\n255\n") + "abcdefghi";
  const auto img = decode_ppm(bytes);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.at(2, 0, 2), 'i');
}

TEST(Ppm, ShortPayloadNamesExpectedSize) {
  try {
    decode_ppm(ppm_2x2(11));
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 12"), std::string::npos) << msg;
    EXPECT_EQ(e.offset(), 22u);
  }
}

TEST(Ppm, RejectsMalformedHeaders) {
  EXPECT_THROW(decode_ppm("P5 2 2 255\n" + std::string(12, 0)), FormatError);
  EXPECT_THROW(decode_ppm("P6 2 2 65535\n" + std::string(24, 0)), FormatError);
  EXPECT_THROW(decode_ppm("P6 2 2 15\n" + std::string(12, 0)), FormatError);
  EXPECT_THROW(decode_ppm("P6 0 2 255\n"), FormatError);
  EXPECT_THROW(decode_ppm("P6 x 2 255\n"), FormatError);
  EXPECT_THROW(decode_ppm("P6 2 2 255"), FormatError);
  EXPECT_THROW(decode_ppm("P62 2 255\n" + std::string(12, 0)), FormatError);
  EXPECT_THROW(decode_ppm(""), FormatError);
}

TEST(Ppm, MaxvalErrorReportsOffset) {
  try {
    decode_ppm("P6 2 2 100\n" + std::string(12, 0));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 7u);
  }
}

TEST(Ppm, EncodeNormalizesHeader) {
  RgbImage img(2, 1);
  img.set(1, 0, {1, 2, 3});
  const std::string expected = std::string("P6\n2 1\n255\n") + std::string(3, '\0') + "\x01\x02\x03";
  EXPECT_EQ(encode_ppm(img), expected);
  EXPECT_EQ(encode_ppm(decode_ppm(ppm_2x2(12))).substr(0, 11), "P6\n2 2\n255\n");
}

TEST(Ppm, FileRoundTripIsBitExact) {
  const auto path = temp_dir() / "round.ppm";
  for (auto [w, h] : {std::pair{1u, 1u}, {37u, 19u}, {128u, 128u}}) {
    const auto img = random_image(w, h, w + h);
    write_image(img, path);
    EXPECT_EQ(read_image(path), img);
    EXPECT_EQ(std::filesystem::file_size(path), encode_ppm(img).size());
  }
}

TEST(Ppm, MissingFileIsIoError) {
  EXPECT_THROW(read_image(temp_dir() / "does_not_exist.ppm"), IoError);
  EXPECT_THROW(write_image(RgbImage(1, 1), temp_dir() / "no_dir" / "x.ppm"), IoError);
}

TEST(Pgm, ThresholdAt128) {
  const std::string bytes = std::string("P5\n4 1\n255\n") + std::string("\x00\x7f\x80\xff", 4);
  const auto m = decode_pgm_mask(bytes);
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_FALSE(m.at(1, 0));
  EXPECT_TRUE(m.at(2, 0));
  EXPECT_TRUE(m.at(3, 0));
}

TEST(Pgm, AllZeroIsEmpty) {
  EXPECT_TRUE(decode_pgm_mask("P5 3 2 255\n" + std::string(6, '\0')).empty());
}

TEST(Pgm, RoundTripOnBinaryAlphabet) {
  MaskImage m(13, 7);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = (i * 7) % 3 == 0;
  const auto path = temp_dir() / "mask.pgm";
  write_mask(m, path);
  EXPECT_EQ(read_mask(path), m);
  const std::string bytes = encode_pgm_mask(m);
  EXPECT_EQ(encode_pgm_mask(decode_pgm_mask(bytes)), bytes);
  for (std::size_t i = bytes.size() - m.bits.size(); i < bytes.size(); ++i)
    EXPECT_TRUE(bytes[i] == '\0' || bytes[i] == '\xff');
  EXPECT_THROW(decode_pgm_mask(encode_ppm(RgbImage(2, 2))), FormatError);
}

TEST(TensorConversion, ExhaustiveRoundTrip) {
  RgbImage img(256, 1);
  for (std::size_t x = 0; x < 256; ++x)
    img.set(x, 0, {std::uint8_t(x), std::uint8_t(255 - x), std::uint8_t((x * 37) & 0xFF)});
  const auto t = image_to_tensor(img);
  EXPECT_EQ(t.shape(), (Shape{3, 1, 256}));
  EXPECT_EQ(t(0, 0, 255), 1.0);
  EXPECT_EQ(t(1, 0, 255), 0.0);
  EXPECT_EQ(tensor_to_image(t), img);
  EXPECT_EQ(tensor_to_image(image_to_tensor<float>(img)), img);
}

TEST(TensorConversion, ClampsAndRounds) {
  Tensor t(3, 1, 5);
  const double vs[5] = {1.7, -0.2, 0.5, 0.5 / 255.0, 254.5 / 255.0};
  for (std::size_t x = 0; x < 5; ++x) t(0, 0, x) = vs[x];
  const auto img = tensor_to_image(t);
  EXPECT_EQ(img.at(0, 0, 0), 255);
  EXPECT_EQ(img.at(1, 0, 0), 0);
  EXPECT_EQ(img.at(2, 0, 0), 128);
  EXPECT_EQ(img.at(3, 0, 0), 1);
  EXPECT_EQ(img.at(4, 0, 0), 255);
  EXPECT_THROW(tensor_to_image(Tensor(1, 2, 2)), ContractError);
}

TEST(TensorConversion, CropMatchesPixels) {
  const auto img = random_image(10, 8, 4);
  const auto t = crop_to_tensor(img, 3, 2, 4, 5);
  EXPECT_EQ(t.shape(), (Shape{3, 5, 4}));
  EXPECT_EQ(t(1, 4, 3), img.at(6, 6, 1) / 255.0);
  EXPECT_THROW(crop_to_tensor(img, 7, 0, 4, 4), ContractError);
}
