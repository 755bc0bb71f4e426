#pragma once

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"
#include "leaf/detector.hpp"
#include "leaf/explainer.hpp"
#include "leaf/harness.hpp"
#include "leaf/metrics.hpp"
#include "leaf/mitigator.hpp"
#include "leaf/models.hpp"
#include "leaf/pipeline.hpp"
#include "leaf/svg.hpp"
#include "leaf/synth.hpp"
