/* image workload: reads a PNG from the sandbox dir, applies an ordered list
 * of filters, returns the canonically re-encoded PNG, and optionally writes
 * it back into the sandbox.
 *
 * Input: JSON {"input_path","filters":[...],"write_output","output_path"}.
 * Filters (all on 8-bit RGB, integer arithmetic shared with the host oracle):
 *   grayscale  y = (299*r + 587*g + 114*b + 500) / 1000, all channels = y
 *   invert     v -> 255 - v per channel
 *   blur3x3    per channel mean of the 3x3 neighbourhood with edge clamping,
 *              rounded half-up: (2*sum + 9) / 18
 */
#include "limes_guest.h"
#include "json.h"
#include "png.h"

#define MAX_PATH 512

static int path_ok(const char *p, usize n) {
    if (n == 0 || p[0] == '/')
        return 0;
    for (usize i = 0; i < n; i++) {
        if (p[i] == 0)
            return 0;
        if (p[i] == '.' && i + 1 < n && p[i + 1] == '.') {
            int at_start = (i == 0 || p[i - 1] == '/');
            int at_end = (i + 2 == n || p[i + 2] == '/');
            if (at_start && at_end)
                return 0;
        }
    }
    return 1;
}

static void filter_grayscale(u8 *pix, u32 w, u32 h) {
    usize n = (usize)w * h;
    for (usize i = 0; i < n; i++) {
        u32 r = pix[3 * i], g = pix[3 * i + 1], b = pix[3 * i + 2];
        u8 y = (u8)((299 * r + 587 * g + 114 * b + 500) / 1000);
        pix[3 * i] = y;
        pix[3 * i + 1] = y;
        pix[3 * i + 2] = y;
    }
}

static void filter_invert(u8 *pix, u32 w, u32 h) {
    usize n = (usize)w * h * 3;
    for (usize i = 0; i < n; i++)
        pix[i] = (u8)(255 - pix[i]);
}

static u32 clamp_coord(long long v, u32 hi) {
    if (v < 0)
        return 0;
    if (v >= (long long)hi)
        return hi - 1;
    return (u32)v;
}

static void filter_blur3x3(const u8 *src, u8 *dst, u32 w, u32 h) {
    for (u32 y = 0; y < h; y++) {
        for (u32 x = 0; x < w; x++) {
            for (int c = 0; c < 3; c++) {
                u32 sum = 0;
                for (int dy = -1; dy <= 1; dy++) {
                    for (int dx = -1; dx <= 1; dx++) {
                        u32 sy = clamp_coord((long long)y + dy, h);
                        u32 sx = clamp_coord((long long)x + dx, w);
                        sum += src[((usize)sy * w + sx) * 3 + c];
                    }
                }
                dst[((usize)y * w + x) * 3 + c] = (u8)((2 * sum + 9) / 18);
            }
        }
    }
}

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    jspan body = {(const char *)in, in_len};
    jspan jin, jfilters, jwrite, jout;
    char input_path[MAX_PATH + 1], output_path[MAX_PATH + 1];
    usize in_path_len = 0, out_path_len = 0;
    int write_output = 0;

    if (!json_find(body, "input_path", &jin) ||
        !json_as_string(jin, input_path, MAX_PATH, &in_path_len) ||
        !json_find(body, "filters", &jfilters) ||
        !json_find(body, "write_output", &jwrite) || !json_as_bool(jwrite, &write_output)) {
        ret_err(ret, "bad job: expected input_path/filters/write_output");
        return;
    }
    input_path[in_path_len] = 0;
    if (!path_ok(input_path, in_path_len)) {
        ret_err(ret, "bad job: unsafe input_path");
        return;
    }
    if (write_output) {
        if (!json_find(body, "output_path", &jout) ||
            !json_as_string(jout, output_path, MAX_PATH, &out_path_len) || out_path_len == 0) {
            ret_err(ret, "bad job: write_output needs output_path");
            return;
        }
        output_path[out_path_len] = 0;
        if (!path_ok(output_path, out_path_len)) {
            ret_err(ret, "bad job: unsafe output_path");
            return;
        }
    }

    u8 *png_in;
    usize png_in_len;
    i32 err = read_file(input_path, &png_in, &png_in_len);
    if (err != 0) {
        ret_err(ret, errno_msg("cannot read input image", err));
        return;
    }

    png_image img;
    const char *perr = png_decode(png_in, png_in_len, &img);
    if (perr) {
        ret_err(ret, perr);
        return;
    }

    usize pos = 0;
    jspan elem;
    int nfilters = 0;
    while (json_next_array_string(jfilters, &pos, &elem)) {
        char name[32];
        usize name_len = 0;
        if (!json_as_string(elem, name, sizeof(name) - 1, &name_len)) {
            ret_err(ret, "bad job: unreadable filter name");
            return;
        }
        nfilters++;
        if (gstreq(name, name_len, "grayscale")) {
            filter_grayscale(img.pixels, img.width, img.height);
        } else if (gstreq(name, name_len, "invert")) {
            filter_invert(img.pixels, img.width, img.height);
        } else if (gstreq(name, name_len, "blur3x3")) {
            u8 *dst = guest_alloc((usize)img.width * img.height * 3);
            if (!dst) {
                ret_err(ret, "out of memory");
                return;
            }
            filter_blur3x3(img.pixels, dst, img.width, img.height);
            img.pixels = dst;
        } else {
            ret_err(ret, "bad job: unknown filter");
            return;
        }
    }
    if (nfilters == 0) {
        ret_err(ret, "bad job: filters must be non-empty");
        return;
    }

    u8 *png_out;
    usize png_out_len;
    perr = png_encode(&img, &png_out, &png_out_len);
    if (perr) {
        ret_err(ret, perr);
        return;
    }

    if (write_output) {
        err = write_file(output_path, png_out, png_out_len);
        if (err != 0) {
            ret_err(ret, errno_msg("cannot write output image", err));
            return;
        }
    }
    ret_ok(ret, png_out, png_out_len);
}
