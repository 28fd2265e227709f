// Python module tagforge._core: thin wrappers over the C++ library.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tagforge/annotator.hpp"
#include "tagforge/chunker.hpp"
#include "tagforge/cli.hpp"
#include "tagforge/core.hpp"
#include "tagforge/error.hpp"
#include "tagforge/harness.hpp"

namespace py = pybind11;
using namespace tagforge;

namespace {

std::vector<TagSpan> to_spans(const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& raw) {
  std::vector<TagSpan> out;
  out.reserve(raw.size());
  for (const auto& [cat, start, end] : raw) out.push_back({cat, start, end});
  return out;
}

MarkupPolicy make_policy(const std::string& nesting, const std::string& collision) {
  MarkupPolicy p;
  p.nesting_order = parse_nesting_order(nesting);
  p.collision_policy = parse_collision_policy(collision);
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Text chunking, tagging markup and benchmark metrics.";
  m.attr("__version__") = TAGFORGE_VERSION;

  // Messages keep the "Code: detail" form of Error::what().
  py::register_exception<Error>(m, "TagforgeError");

  m.def("normalize", [](const std::string& text) { return normalize(text); }, py::arg("text"));
  m.def("content_hash", [](const std::string& text) { return content_hash(text).hex(); }, py::arg("text"));

  m.def(
      "chunk",
      [](const std::string& doc_id, const std::string& text, const std::string& strategy, std::size_t max_chunk_size,
         std::size_t overlap) {
        ChunkingConfig cfg;
        cfg.strategy = parse_chunk_strategy(strategy);
        cfg.max_chunk_size = max_chunk_size;
        cfg.overlap = overlap;
        py::list out;
        for (const auto& c : chunk(Document{doc_id, text, {}}, cfg)) {
          py::dict d;
          d["doc_id"] = c.doc_id;
          d["index"] = c.index;
          d["start"] = c.start;
          d["end"] = c.end;
          d["text"] = c.text;
          d["hash"] = c.hash.hex();
          d["oversized"] = c.oversized;
          out.append(d);
        }
        return out;
      },
      py::arg("doc_id"), py::arg("text"), py::arg("strategy") = "sentence", py::arg("max_chunk_size") = 250,
      py::arg("overlap") = 0);

  m.def(
      "render_span_markup",
      [](const std::string& text, const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& spans,
         const std::string& nesting_order, const std::string& collision_policy) {
        return render_span_markup(text, to_spans(spans), make_policy(nesting_order, collision_policy));
      },
      py::arg("text"), py::arg("spans"), py::arg("nesting_order") = "longer_span_outer",
      py::arg("collision_policy") = "drop_inner");

  m.def(
      "render_chunk_markup",
      [](const std::string& text, const std::set<std::string>& labels) { return render_chunk_markup(text, labels); },
      py::arg("text"), py::arg("labels"));

  m.def(
      "strip_tags", [](const std::string& marked, const std::set<std::string>& categories) {
        return strip_tags(marked, categories);
      },
      py::arg("marked"), py::arg("categories"));

  m.def(
      "tags_balanced", [](const std::string& marked, const std::set<std::string>& categories) {
        return tags_balanced(marked, categories);
      },
      py::arg("marked"), py::arg("categories"));

  m.def(
      "verify_fidelity",
      [](const std::string& original, const std::string& marked, const std::set<std::string>& categories) {
        auto r = verify_fidelity(original, marked, categories);
        py::dict d;
        d["ok"] = r.ok;
        d["balanced"] = r.balanced;
        d["first_divergence"] = r.first_divergence ? py::cast(*r.first_divergence) : py::none();
        return d;
      },
      py::arg("original"), py::arg("marked"), py::arg("categories"));

  m.def(
      "lift_spans",
      [](const std::string& marked, const std::set<std::string>& categories) {
        std::vector<std::tuple<std::string, std::size_t, std::size_t>> out;
        for (const auto& s : lift_spans(marked, categories)) out.emplace_back(s.category, s.start, s.end);
        return out;
      },
      py::arg("marked"), py::arg("categories"));

  m.def("percent_hundredths", &percent_hundredths, py::arg("num"), py::arg("den"));
  m.def("format_hundredths", &format_hundredths, py::arg("value"));
  m.def("extremum_drop_rate", &extremum_drop_rate, py::arg("per_context_length"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
