#ifndef XLPOOL_HPP_
#define XLPOOL_HPP_

#include "xlpool/descriptor.hpp"
#include "xlpool/error.hpp"
#include "xlpool/kernel.hpp"
#include "xlpool/npy.hpp"
#include "xlpool/pca.hpp"
#include "xlpool/pooling.hpp"
#include "xlpool/postprocess.hpp"
#include "xlpool/retrieval.hpp"
#include "xlpool/selftest.hpp"
#include "xlpool/signvec.hpp"
#include "xlpool/spm.hpp"
#include "xlpool/tensor.hpp"

#endif  // XLPOOL_HPP_
