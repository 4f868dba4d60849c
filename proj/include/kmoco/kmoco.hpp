#pragma once

#include "kmoco/error.hpp"
#include "kmoco/rng.hpp"

#include "kmoco/field/fft.hpp"
#include "kmoco/field/image.hpp"
#include "kmoco/field/transform.hpp"

#include "kmoco/motion/simulate.hpp"
#include "kmoco/motion/types.hpp"

#include "kmoco/detection/detector.hpp"
#include "kmoco/detection/masks.hpp"

#include "kmoco/correction/corrector.hpp"
#include "kmoco/correction/dc_project.hpp"
#include "kmoco/correction/losses.hpp"
#include "kmoco/correction/trainer.hpp"

#include "kmoco/metrics/metrics.hpp"
#include "kmoco/metrics/stats.hpp"

#include "kmoco/io/mask_file.hpp"
#include "kmoco/io/nifti.hpp"
#include "kmoco/io/phantom.hpp"
#include "kmoco/io/png.hpp"
#include "kmoco/io/raw.hpp"
#include "kmoco/io/weights.hpp"

#include "kmoco/harness/config.hpp"
#include "kmoco/harness/dataset.hpp"
#include "kmoco/harness/experiment.hpp"
