#include "lcmlai/matrix_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace lcmlai {

void write_matrix(const std::filesystem::path& path, const MatrixXd& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      if (j > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw LoadError("short write to " + path.string());
}

MatrixXd read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  Index rows = -1;
  Index cols = -1;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw ParseError(path.string(), 1, "bad 'rows cols' header");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      if (!(in >> m(i, j))) throw ParseError(path.string(), static_cast<std::size_t>(i) + 2, "too few values");
    }
  }
  std::string rest;
  if (in >> rest) throw ParseError(path.string(), static_cast<std::size_t>(rows) + 2, "trailing values");
  return m;
}

void write_heatmap(const std::filesystem::path& path, const MatrixXd& m, int cell) {
  if (cell < 1) cell = 1;
  const Index w = m.cols() * cell;
  const Index h = m.rows() * cell;
  const double scale = m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w * h * 3));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double t = scale > 0.0 ? m(i, j) / scale : 0.0;
      const auto fade = static_cast<unsigned char>(255.0 * (1.0 - std::abs(t)) + 0.5);
      const unsigned char rgb[3] = {t >= 0 ? static_cast<unsigned char>(255) : fade, fade,
                                    t <= 0 ? static_cast<unsigned char>(255) : fade};
      for (int y = 0; y < cell; ++y) {
        for (int x = 0; x < cell; ++x) {
          const auto px = static_cast<std::size_t>(((i * cell + y) * w + j * cell + x) * 3);
          pixels[px] = rgb[0];
          pixels[px + 1] = rgb[1];
          pixels[px + 2] = rgb[2];
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace lcmlai
