#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>

#include "avse/binary_io.hpp"
#include "avse/signal.hpp"

namespace avse {

enum class SpectrogramFormat { Pgm, Csv };

// Magnitude in dB; exact zeros map to -inf.
inline Matrix magnitude_db(const ComplexSpectra& spectra) {
  Matrix db(spectra.frames.rows(), spectra.frames.cols());
  for (Eigen::Index t = 0; t < db.rows(); ++t)
    for (Eigen::Index k = 0; k < db.cols(); ++k) {
      const double a = std::abs(spectra.frames(t, k));
      db(t, k) = a > 0.0 ? 20.0 * std::log10(a) : -std::numeric_limits<double>::infinity();
    }
  return db;
}

// 8-bit intensities, frame-major (T x bins). [max - 80 dB, max] maps linearly
// onto [0, 255]; anything quieter clamps to 0.
inline Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> spectrogram_intensity(
    const ComplexSpectra& spectra, double range_db = 80.0) {
  const Matrix db = magnitude_db(spectra);
  const double top = db.maxCoeff();
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(db.rows(), db.cols());
  for (Eigen::Index t = 0; t < db.rows(); ++t)
    for (Eigen::Index k = 0; k < db.cols(); ++k) {
      double v = 0.0;
      if (std::isfinite(top) && std::isfinite(db(t, k))) v = std::clamp((db(t, k) - (top - range_db)) / range_db, 0.0, 1.0);
      out(t, k) = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  return out;
}

// PGM: binary P5, one column per frame, one row per bin, lowest bin on the
// bottom row. CSV: one frame per row of dB values, silent bins floored at -200 dB.
inline void emit_spectrogram(const ComplexSpectra& spectra, const std::filesystem::path& path, SpectrogramFormat format) {
  require(spectra.frame_count() > 0 && spectra.bins() > 0, ErrorKind::InvalidArgument, "empty spectra");
  if (format == SpectrogramFormat::Pgm) {
    const auto px = spectrogram_intensity(spectra);
    const std::size_t width = spectra.frame_count(), height = spectra.bins();
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + width * height);
    for (std::size_t row = 0; row < height; ++row) {
      const std::size_t bin = height - 1 - row;
      for (std::size_t col = 0; col < width; ++col)
        out[header + row * width + col] = static_cast<char>(px(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(bin)));
    }
    write_file_atomic(path, out);
    return;
  }
  const Matrix db = magnitude_db(spectra);
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(6);
  os << std::fixed;
  for (Eigen::Index t = 0; t < db.rows(); ++t) {
    for (Eigen::Index k = 0; k < db.cols(); ++k) {
      if (k) os << ',';
      os << std::max(db(t, k), -200.0);
    }
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace avse
