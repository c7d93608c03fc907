/* mandelbrot workload: sequential escape-time iteration over a pixel grid.
 *
 * Input: JSON {"width","height","max_iter","viewport":{"re_min","re_max",
 * "im_min","im_max"}}. Output: row-major grid of escape counts as u16
 * little-endian. A pixel's complex coordinate is taken at the pixel centre:
 *
 *   cx = re_min + (re_max - re_min) * ((x + 0.5) / width)
 *   cy = im_min + (im_max - im_min) * ((y + 0.5) / height)
 *
 * and its count is min{k >= 1 : |z_k| > 2} with z_0 = 0, z_{k+1} = z_k^2 + c,
 * capped at max_iter. The host oracle mirrors these exact expression shapes,
 * so results are bit-identical (plain IEEE double ops on both sides).
 *
 * Built with MANDEL_IO defined, the grid is additionally written to
 * "mandelbrot.pgm" (16-bit big-endian P5) in the sandbox dir before return.
 */
#include "limes_guest.h"
#include "json.h"

__attribute__((unused)) static usize fmt_uint(char *dst, u32 v) {
    char tmp[12];
    int d = 0;
    if (v == 0)
        tmp[d++] = '0';
    while (v > 0) {
        tmp[d++] = (char)('0' + v % 10);
        v /= 10;
    }
    usize n = 0;
    while (d > 0)
        dst[n++] = tmp[--d];
    return n;
}

#ifdef MANDEL_IO
static i32 write_pgm(u32 w, u32 h, const u8 *grid_le) {
    usize header_cap = 64;
    usize body = (usize)w * h * 2;
    u8 *pgm = guest_alloc(header_cap + body);
    if (!pgm)
        return -1;
    usize o = 0;
    pgm[o++] = 'P';
    pgm[o++] = '5';
    pgm[o++] = '\n';
    o += fmt_uint((char *)pgm + o, w);
    pgm[o++] = ' ';
    o += fmt_uint((char *)pgm + o, h);
    pgm[o++] = '\n';
    o += fmt_uint((char *)pgm + o, 65535);
    pgm[o++] = '\n';
    /* samples are big-endian in PGM; the grid payload is little-endian */
    for (usize i = 0; i < (usize)w * h; i++) {
        pgm[o++] = grid_le[2 * i + 1];
        pgm[o++] = grid_le[2 * i];
    }
    return write_file("mandelbrot.pgm", pgm, o);
}
#endif

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    jspan body = {(const char *)in, in_len};
    jspan jw, jh, jmi, jvp, jv;
    long long w, h, max_iter;
    if (!json_find(body, "width", &jw) || !json_as_longlong(jw, &w) ||
        !json_find(body, "height", &jh) || !json_as_longlong(jh, &h) ||
        !json_find(body, "max_iter", &jmi) || !json_as_longlong(jmi, &max_iter) ||
        !json_find(body, "viewport", &jvp)) {
        ret_err(ret, "bad params: expected width/height/max_iter/viewport");
        return;
    }
    double re_min, re_max, im_min, im_max;
    if (!(json_find(jvp, "re_min", &jv) && json_as_double(jv, &re_min)) ||
        !(json_find(jvp, "re_max", &jv) && json_as_double(jv, &re_max)) ||
        !(json_find(jvp, "im_min", &jv) && json_as_double(jv, &im_min)) ||
        !(json_find(jvp, "im_max", &jv) && json_as_double(jv, &im_max))) {
        ret_err(ret, "bad params: viewport needs re_min/re_max/im_min/im_max");
        return;
    }
    if (w < 1 || h < 1 || w > 1 << 16 || h > 1 << 16) {
        ret_err(ret, "bad params: width/height out of range");
        return;
    }
    if (max_iter < 1 || max_iter > 65535) {
        ret_err(ret, "bad params: max_iter must be in 1..65535");
        return;
    }
    if (!(re_min < re_max) || !(im_min < im_max)) {
        ret_err(ret, "bad params: empty viewport");
        return;
    }

    usize npix = (usize)w * (usize)h;
    u8 *grid = guest_alloc(npix * 2);
    if (!grid) {
        ret_err(ret, "out of memory");
        return;
    }
    double dre = re_max - re_min;
    double dim = im_max - im_min;
    usize o = 0;
    for (long long y = 0; y < h; y++) {
        double cy = im_min + dim * (((double)y + 0.5) / (double)h);
        for (long long x = 0; x < w; x++) {
            double cx = re_min + dre * (((double)x + 0.5) / (double)w);
            double zr = 0.0, zi = 0.0;
            u32 n = (u32)max_iter;
            for (long long k = 1; k <= max_iter; k++) {
                double nzr = zr * zr - zi * zi + cx;
                double nzi = 2.0 * zr * zi + cy;
                zr = nzr;
                zi = nzi;
                if (zr * zr + zi * zi > 4.0) {
                    n = (u32)k;
                    break;
                }
            }
            grid[o++] = (u8)(n & 0xff);
            grid[o++] = (u8)(n >> 8);
        }
    }

#ifdef MANDEL_IO
    i32 err = write_pgm((u32)w, (u32)h, grid);
    if (err != 0) {
        ret_err(ret, errno_msg("pgm write failed", err));
        return;
    }
#endif
    ret_ok(ret, grid, npix * 2);
}
