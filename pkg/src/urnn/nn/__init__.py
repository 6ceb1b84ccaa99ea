from urnn.nn.cells import CellKind, CellParams, CellState, cell_step, init_params, zero_state
from urnn.nn.encoders import (EncoderVariant, EmbeddingParams, Encoding, EncoderParams, embed,
                              encode, encode_plain, encode_bi, encode_u, encode_reversed_u,
                              encoding_dim, init_embedding, init_encoder)
from urnn.nn.pooling import (PoolingKind, GridSpec, GridPooling, PoolingParams, channels_for,
                             rasterize, embed_grid, pool_none, init_pooling)
