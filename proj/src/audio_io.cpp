#include "bss/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace bss {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

}  // namespace

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("AudioBuffer: sample_rate must be positive");
  for (const auto& ch : samples) {
    if (ch.size() != num_samples())
      throw std::invalid_argument("AudioBuffer: channels differ in length");
  }
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioIoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12) throw TruncatedFileError(path.string() + ": too short for a RIFF header");
  if (std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw UnsupportedEncodingError(path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* hdr = p + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    pos += 8;
    if (pos + chunk_size > size)
      throw TruncatedFileError(path.string() + ": chunk extends past end of file");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw TruncatedFileError(path.string() + ": fmt chunk too small");
      format = read_u16(p + pos);
      channels = read_u16(p + pos + 2);
      rate = read_u32(p + pos + 4);
      bits = read_u16(p + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = p + pos;
      data_size = chunk_size;
      have_data = true;
    }
    pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw TruncatedFileError(path.string() + ": missing fmt chunk");
  if (!have_data) throw TruncatedFileError(path.string() + ": missing data chunk");
  if (channels == 0 || rate == 0)
    throw UnsupportedEncodingError(path.string() + ": invalid fmt fields");

  std::size_t bytes_per_sample;
  if (format == kFormatPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw UnsupportedEncodingError(path.string() + ": only PCM-16 and float-32 are supported (format " +
                                   std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t block = bytes_per_sample * channels;
  if (data_size % block != 0)
    throw TruncatedFileError(path.string() + ": data chunk is not a whole number of sample blocks");
  const std::size_t n_samples = data_size / block;

  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(rate);
  buf.samples.assign(channels, std::vector<double>(n_samples));
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + (i * channels + c) * bytes_per_sample;
      if (format == kFormatPcm) {
        const auto v = static_cast<std::int16_t>(read_u16(s));
        buf.samples[c][i] = static_cast<double>(v) / 32768.0;
      } else {
        float f;
        std::uint32_t raw = read_u32(s);
        std::memcpy(&f, &raw, 4);
        buf.samples[c][i] = static_cast<double>(f);
      }
    }
  }
  return buf;
}

WavWriteResult write_wav(const std::filesystem::path& path,
                         const AudioBuffer& buf, WavEncoding encoding) {
  if (buf.num_channels() == 0)
    throw std::invalid_argument("write_wav: need at least one channel");
  buf.validate();

  const auto channels = static_cast<std::uint16_t>(buf.num_channels());
  const std::size_t n_samples = buf.num_samples();
  const std::uint16_t bytes_per_sample = encoding == WavEncoding::pcm16 ? 2 : 4;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(n_samples * channels * bytes_per_sample);

  WavWriteResult result;
  std::string out;
  out.reserve(44 + data_size);
  out.append("RIFF");
  put_u32(out, 36 + data_size);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * channels * bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(channels * bytes_per_sample));
  put_u16(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out.append("data");
  put_u32(out, data_size);

  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double x = buf.samples[c][i];
      if (encoding == WavEncoding::pcm16) {
        double v = x;
        if (v > 1.0) { v = 1.0; result.clipped = true; }
        if (v < -1.0) { v = -1.0; result.clipped = true; }
        auto q = static_cast<long>(std::lrint(v * 32768.0));
        q = std::clamp(q, -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        const auto f = static_cast<float>(x);
        std::uint32_t raw;
        std::memcpy(&raw, &f, 4);
        put_u32(out, raw);
      }
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw AudioIoError("cannot open " + path.string() + " for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw AudioIoError("short write to " + path.string());
  return result;
}

}  // namespace bss
