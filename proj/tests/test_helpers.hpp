#pragma once

#include <functional>
#include <map>
#include <vector>

#include "nmneval/executor.hpp"
#include "nmneval/synth.hpp"

namespace nmneval::testing {

inline BoundingBox box(double x1, double y1, double x2, double y2,
                       ImageSide side = ImageSide::Left) {
    return BoundingBox{x1, y1, x2, y2, side};
}

inline Scene make_scene(std::vector<BoundingBox> proposals, std::string id = "ex") {
    Scene scene;
    scene.id = std::move(id);
    scene.proposals = std::move(proposals);
    return scene;
}

/// Provider answering from a fixed (node, kind) -> scores table.
class StubProvider : public GroundingProvider {
  public:
    void set(NodeId node, LearnedKind kind, std::vector<double> scores) {
        table_[{node, kind}] = std::move(scores);
    }

    std::vector<double> scores(const GroundingQuery& query) override {
        auto it = table_.find({query.node, query.kind});
        if (it == table_.end())
            throw ValidationError("stub provider has no scores for node " +
                                  std::to_string(query.node));
        return it->second;
    }

  private:
    std::map<std::pair<NodeId, LearnedKind>, std::vector<double>> table_;
};

/// Two-image world builder for set-semantics fixtures.
struct WorldBuilder {
    SyntheticScene scene;

    WorldBuilder() {
        scene.world.image_width = 100;
        scene.world.image_height = 100;
    }

    std::size_t object(const std::string& category, std::set<std::string> attributes,
                       BoundingBox b) {
        SyntheticObject o;
        o.category = category;
        o.attributes = std::move(attributes);
        o.box = b;
        scene.world.objects.push_back(std::move(o));
        return scene.world.objects.size() - 1;
    }

    void relate(std::size_t from, const std::string& relation, std::size_t to) {
        scene.world.objects[from].relations.emplace_back(relation, to);
    }

    /// Proposals identical to the gold boxes, in object order.
    SyntheticScene&& perfect_proposals(std::string id = "ex") {
        scene.scene.id = std::move(id);
        for (std::size_t i = 0; i < scene.world.objects.size(); ++i) {
            scene.scene.proposals.push_back(scene.world.objects[i].box);
            scene.proposal_object.push_back(i);
        }
        return std::move(scene);
    }
};

}  // namespace nmneval::testing
