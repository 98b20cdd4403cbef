#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "unloc/data.hpp"
#include "unloc/errors.hpp"

namespace unloc {

using nlohmann::json;

namespace {

[[noreturn]] void schema_fail(const std::string& field, const std::string& what) {
  throw SchemaError(field + ": " + what);
}

const json& require_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema_fail(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(where + "." + key, "missing");
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  if (!v.is_number()) schema_fail(where + "." + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_fail(where + "." + key, "must be finite");
  return d;
}

}  // namespace

AnnotationFile parse_annotations(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("annotation file is not valid JSON: ") + e.what(), e.byte);
  }
  AnnotationFile out;
  const json& task = require_field(root, "task", "annotations");
  if (!task.is_string()) schema_fail("annotations.task", "expected a string");
  try {
    out.task = parse_task(task.get<std::string>());
  } catch (const ConfigError& e) {
    schema_fail("annotations.task", e.what());
  }
  const bool mr = out.task == TaskKind::MomentRetrieval;

  if (auto it = root.find("classes"); it != root.end()) {
    if (!it->is_array()) schema_fail("annotations.classes", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) {
        schema_fail("annotations.classes[" + std::to_string(i) + "]", "expected a string");
      }
      out.classes.push_back((*it)[i].get<std::string>());
    }
  } else if (!mr) {
    schema_fail("annotations.classes", "missing");
  }

  const json& videos = require_field(root, "videos", "annotations");
  if (!videos.is_array()) schema_fail("annotations.videos", "expected an array");
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const std::string where = "videos[" + std::to_string(v) + "]";
    const json& rec = videos[v];
    AnnotatedVideo video;
    const json& id = require_field(rec, "id", where);
    if (!id.is_string() || id.get<std::string>().empty()) {
      schema_fail(where + ".id", "expected a non-empty string");
    }
    video.id = id.get<std::string>();
    video.duration_sec = require_number(rec, "duration_sec", where);
    if (video.duration_sec <= 0.0) schema_fail(where + ".duration_sec", "must be > 0");
    video.fps = require_number(rec, "fps", where);
    if (video.fps <= 0.0) schema_fail(where + ".fps", "must be > 0");

    const json& segs = require_field(rec, "segments", where);
    if (!segs.is_array()) schema_fail(where + ".segments", "expected an array");
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const std::string sw = where + ".segments[" + std::to_string(s) + "]";
      AnnotatedSegment seg;
      seg.start_sec = require_number(segs[s], "start_sec", sw);
      seg.end_sec = require_number(segs[s], "end_sec", sw);
      if (seg.start_sec < 0.0) schema_fail(sw + ".start_sec", "must be >= 0");
      if (seg.end_sec < seg.start_sec) schema_fail(sw + ".end_sec", "must be >= start_sec");
      if (seg.end_sec > video.duration_sec) {
        schema_fail(sw + ".end_sec", "exceeds duration_sec of video '" + video.id + "'");
      }
      if (mr) {
        const json& cap = require_field(segs[s], "caption", sw);
        if (!cap.is_string()) schema_fail(sw + ".caption", "expected a string");
        seg.caption = cap.get<std::string>();
      } else {
        const json& label = require_field(segs[s], "label", sw);
        if (label.is_string()) {
          auto it = std::find(out.classes.begin(), out.classes.end(), label.get<std::string>());
          if (it == out.classes.end()) {
            schema_fail(sw + ".label", "unknown class '" + label.get<std::string>() + "'");
          }
          seg.label = static_cast<int>(it - out.classes.begin());
        } else if (label.is_number_integer()) {
          seg.label = label.get<int>();
          if (seg.label < 0 || seg.label >= static_cast<int>(out.classes.size())) {
            schema_fail(sw + ".label", "class index out of range");
          }
        } else {
          schema_fail(sw + ".label", "expected a class name or index");
        }
      }
      video.segments.push_back(seg);
    }
    out.videos.push_back(std::move(video));
  }
  std::stable_sort(out.videos.begin(), out.videos.end(),
                   [](const AnnotatedVideo& a, const AnnotatedVideo& b) { return a.id < b.id; });
  for (std::size_t v = 1; v < out.videos.size(); ++v) {
    if (out.videos[v].id == out.videos[v - 1].id) {
      schema_fail("videos", "duplicate id '" + out.videos[v].id + "'");
    }
  }
  return out;
}

AnnotationFile read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_annotations(buf.str());
}

std::string annotations_to_json(const AnnotationFile& file) {
  json root;
  root["task"] = to_string(file.task);
  root["classes"] = file.classes;
  root["videos"] = json::array();
  for (const auto& v : file.videos) {
    json rec{{"id", v.id}, {"duration_sec", v.duration_sec}, {"fps", v.fps}};
    rec["segments"] = json::array();
    for (const auto& s : v.segments) {
      json seg{{"start_sec", s.start_sec}, {"end_sec", s.end_sec}};
      if (file.task == TaskKind::MomentRetrieval) {
        seg["caption"] = s.caption;
      } else {
        seg["label"] = file.classes.at(static_cast<std::size_t>(s.label));
      }
      rec["segments"].push_back(std::move(seg));
    }
    root["videos"].push_back(std::move(rec));
  }
  return root.dump(1);
}

AnnotationFile to_annotations(const Dataset& dataset) {
  AnnotationFile out;
  out.task = dataset.task;
  out.classes = dataset.classes;
  for (const auto& v : dataset.videos) {
    AnnotatedVideo rec;
    rec.id = v.id;
    rec.fps = v.fps;
    rec.duration_sec = v.length() / v.fps;
    for (const auto& s : v.segments) {
      AnnotatedSegment seg;
      seg.start_sec = s.start / v.fps;
      seg.end_sec = s.end / v.fps;
      if (dataset.task == TaskKind::MomentRetrieval) {
        seg.caption = v.captions.at(static_cast<std::size_t>(s.class_id));
      } else {
        seg.label = s.class_id;
      }
      rec.segments.push_back(std::move(seg));
    }
    out.videos.push_back(std::move(rec));
  }
  std::stable_sort(out.videos.begin(), out.videos.end(),
                   [](const AnnotatedVideo& a, const AnnotatedVideo& b) { return a.id < b.id; });
  return out;
}

Dataset load_dataset(const std::filesystem::path& annotation_path) {
  const AnnotationFile file = read_annotations(annotation_path);
  const auto feature_dir = annotation_path.parent_path() / "features";
  Dataset ds;
  ds.task = file.task;
  ds.classes = file.classes;
  for (std::size_t v = 0; v < file.videos.size(); ++v) {
    const auto& rec = file.videos[v];
    VideoRecord video;
    video.id = rec.id;
    video.fps = rec.fps;
    const auto path = feature_dir / (rec.id + ".ulft");
    if (!std::filesystem::exists(path)) {
      throw InputError("videos[" + std::to_string(v) + "]: missing feature file " +
                       path.string());
    }
    FeatureArray features = read_features(path);
    video.frames = std::move(features.rows);
    if (ds.raw_dim == 0) ds.raw_dim = static_cast<int>(video.frames.cols());
    if (video.frames.cols() != ds.raw_dim) {
      throw InputError("videos[" + std::to_string(v) + "]: feature width " +
                       std::to_string(video.frames.cols()) + " differs from " +
                       std::to_string(ds.raw_dim));
    }
    for (const auto& s : rec.segments) {
      Segment seg{s.start_sec * rec.fps, s.end_sec * rec.fps, s.label, {}};
      seg.end = std::min(seg.end, static_cast<double>(video.length() - 1));
      seg.start = std::min(seg.start, seg.end);
      if (ds.task == TaskKind::MomentRetrieval) {
        seg.class_id = static_cast<int>(video.captions.size());
        video.captions.push_back(s.caption);
      }
      video.segments.push_back(seg);
    }
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (const auto& v : dataset.videos) {
    FeatureArray features;
    features.rows = v.frames;
    features.mask.assign(static_cast<std::size_t>(v.length()), 1);
    write_features(dir / "features" / (v.id + ".ulft"), features);
  }
  std::ofstream out(dir / "annotations.json");
  if (!out) throw InputError("cannot write " + (dir / "annotations.json").string());
  out << annotations_to_json(to_annotations(dataset)) << "\n";
}

Vocabulary build_vocabulary(const Dataset& dataset, const PromptSet& prompts) {
  Vocabulary vocab;
  for (const auto& t : prompts.templates()) {
    std::string text = t;
    text.replace(text.find("{label}"), 7, "");
    vocab.add_text(text);
  }
  for (const auto& c : dataset.classes) vocab.add_text(c);
  for (const auto& v : dataset.videos) {
    for (const auto& cap : v.captions) vocab.add_text(cap);
  }
  return vocab;
}

}  // namespace unloc
