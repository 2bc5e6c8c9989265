# cython: boundscheck=False, wraparound=False, cdivision=True
# Hot kernels for kernel-3 "same" 1-D convolution.  Inputs arrive padded
# by one zero column on each side so every inner loop runs full length.

ctypedef fused real:
    float
    double


def conv3_fwd(real[:, :, ::1] xp, real[:, :, ::1] w, real[::1] b,
              real[:, :, ::1] y):
    """y[n,o,t] = b[o] + sum_{i,k} w[o,i,k] * xp[n,i,t+k] with xp padded."""
    cdef Py_ssize_t N = y.shape[0], Co = y.shape[1], L = y.shape[2]
    cdef Py_ssize_t Ci = xp.shape[1]
    cdef Py_ssize_t n, o, i, t
    cdef real w0, w1, w2, bo
    for n in range(N):
        for o in range(Co):
            bo = b[o]
            for t in range(L):
                y[n, o, t] = bo
            for i in range(Ci):
                w0 = w[o, i, 0]; w1 = w[o, i, 1]; w2 = w[o, i, 2]
                for t in range(L):
                    y[n, o, t] += (w0 * xp[n, i, t] + w1 * xp[n, i, t + 1]
                                   + w2 * xp[n, i, t + 2])
    return 0


def conv3_gw(real[:, :, ::1] xp, real[:, :, ::1] gy, real[:, :, ::1] gw):
    """gw[o,i,k] += sum_{n,t} gy[n,o,t] * xp[n,i,t+k] with xp padded."""
    cdef Py_ssize_t N = gy.shape[0], Co = gy.shape[1], L = gy.shape[2]
    cdef Py_ssize_t Ci = xp.shape[1]
    cdef Py_ssize_t n, o, i, t
    cdef real a0, a1, a2, g
    for n in range(N):
        for o in range(Co):
            for i in range(Ci):
                a0 = 0; a1 = 0; a2 = 0
                for t in range(L):
                    g = gy[n, o, t]
                    a0 += g * xp[n, i, t]
                    a1 += g * xp[n, i, t + 1]
                    a2 += g * xp[n, i, t + 2]
                gw[o, i, 0] += a0; gw[o, i, 1] += a1; gw[o, i, 2] += a2
    return 0
