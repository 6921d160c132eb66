//! 3D convolution (dense, grouped/depthwise, strided) and its transpose.
//!
//! Cross-correlation orientation: no kernel flip. Weights are laid out as
//! `[out_ch][in_per_group][kz][ky][kx]` with kx fastest.

use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2` on both sides of each axis.
    Same,
    Valid,
}

impl Padding {
    fn amount(self, size: [usize; 3]) -> [usize; 3] {
        match self {
            Padding::Same => size.map(|k| (k - 1) / 2),
            Padding::Valid => [0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub out_ch: usize,
    pub in_per_group: usize,
    pub size: [usize; 3],
    pub groups: usize,
    pub stride: [usize; 3],
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn zeros(out_ch: usize, in_per_group: usize, size: [usize; 3], groups: usize) -> Self {
        let n = out_ch * in_per_group * size.iter().product::<usize>();
        Self {
            out_ch,
            in_per_group,
            size,
            groups,
            stride: [1; 3],
            weights: vec![T::zero(); n],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = [stride; 3];
        self
    }

    pub fn in_ch(&self) -> usize {
        self.in_per_group * self.groups
    }

    pub fn taps(&self) -> usize {
        self.size.iter().product()
    }

    pub fn weight_index(&self, o: usize, c: usize, kx: usize, ky: usize, kz: usize) -> usize {
        let [sx, sy, sz] = self.size;
        kx + sx * (ky + sy * (kz + sz * (c + self.in_per_group * o)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.out_ch % self.groups != 0 {
            return Err(Error::ShapeMismatch(format!(
                "groups {} do not divide out channels {}",
                self.groups, self.out_ch
            )));
        }
        if self.size.contains(&0) || self.stride.contains(&0) || self.in_per_group == 0 {
            return Err(Error::ShapeMismatch("zero-sized kernel geometry".into()));
        }
        if self.weights.len() != self.out_ch * self.in_per_group * self.taps() {
            return Err(Error::ShapeMismatch("weight count".into()));
        }
        if self.bias.len() != self.out_ch {
            return Err(Error::ShapeMismatch("bias count".into()));
        }
        Ok(())
    }

    /// Output spatial size for an input of spatial size `input`.
    pub fn output_dims(&self, input: [usize; 3], padding: Padding) -> Result<[usize; 3]> {
        out_dims(input, self.size, self.stride, padding.amount(self.size))
    }
}

fn out_dims(input: [usize; 3], k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let span = input[a] + 2 * p[a];
        if span < k[a] {
            return Err(Error::ShapeMismatch(format!(
                "input {input:?} smaller than kernel {k:?}"
            )));
        }
        out[a] = (span - k[a]) / s[a] + 1;
    }
    Ok(out)
}

/// Geometry of a convolution in its forward ("conv view") direction.
#[derive(Clone, Copy, Debug)]
struct Geom {
    batch: usize,
    cin: usize,
    cout: usize,
    groups: usize,
    ins: [usize; 3],
    outs: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
}

impl Geom {
    fn cin_pg(&self) -> usize {
        self.cin / self.groups
    }
    fn cout_pg(&self) -> usize {
        self.cout / self.groups
    }
    fn in_plane(&self) -> usize {
        self.ins.iter().product()
    }
    fn out_plane(&self) -> usize {
        self.outs.iter().product()
    }
    fn pointwise(&self) -> bool {
        self.k == [1; 3] && self.s == [1; 3] && self.p == [0; 3]
    }
}

/// Output positions `o` whose input `o*s + d - p` falls inside `[0, nin)`.
fn axis_range(d: usize, s: usize, p: usize, nin: usize, nout: usize) -> (usize, usize) {
    let lo = if p > d { (p - d).div_ceil(s) } else { 0 };
    let top = nin as isize - 1 + p as isize - d as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / s + 1).min(nout);
    (lo.min(hi), hi)
}

/// Visits every (out row, in row) pairing for one kernel tap. The callback
/// receives the output row offset, input row offset, x range start and length
/// in output coordinates, and the input x start.
#[inline]
fn for_each_row(g: &Geom, kx: usize, ky: usize, kz: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (xlo, xhi) = axis_range(kx, g.s[0], g.p[0], g.ins[0], g.outs[0]);
    if xlo >= xhi {
        return;
    }
    let (ylo, yhi) = axis_range(ky, g.s[1], g.p[1], g.ins[1], g.outs[1]);
    let (zlo, zhi) = axis_range(kz, g.s[2], g.p[2], g.ins[2], g.outs[2]);
    let ix0 = xlo * g.s[0] + kx - g.p[0];
    for oz in zlo..zhi {
        let iz = oz * g.s[2] + kz - g.p[2];
        for oy in ylo..yhi {
            let iy = oy * g.s[1] + ky - g.p[1];
            let orow = g.outs[0] * (oy + g.outs[1] * oz);
            let irow = g.ins[0] * (iy + g.ins[1] * iz);
            f(orow, irow, xlo, xhi - xlo, ix0);
        }
    }
}

/// y += W * x (no bias).
fn core_forward<T: Real>(x: &[T], w: &[T], g: &Geom, y: &mut [T]) {
    let (ip, op) = (g.in_plane(), g.out_plane());
    let taps = g.k.iter().product::<usize>();
    let (cin_pg, cout_pg) = (g.cin_pg(), g.cout_pg());
    let sx = g.s[0];
    for b in 0..g.batch {
        for grp in 0..g.groups {
            for ol in 0..cout_pg {
                let o = grp * cout_pg + ol;
                let yp = &mut y[(b * g.cout + o) * op..(b * g.cout + o + 1) * op];
                for cl in 0..cin_pg {
                    let c = grp * cin_pg + cl;
                    let xp = &x[(b * g.cin + c) * ip..(b * g.cin + c + 1) * ip];
                    let wb = (o * cin_pg + cl) * taps;
                    if g.pointwise() {
                        let wv = w[wb];
                        for (yv, &xv) in yp.iter_mut().zip(xp) {
                            *yv += wv * xv;
                        }
                        continue;
                    }
                    let mut t = 0;
                    for kz in 0..g.k[2] {
                        for ky in 0..g.k[1] {
                            for kx in 0..g.k[0] {
                                let wv = w[wb + t];
                                t += 1;
                                for_each_row(g, kx, ky, kz, |orow, irow, ox, len, ix| {
                                    let yr = &mut yp[orow + ox..orow + ox + len];
                                    if sx == 1 {
                                        let xr = &xp[irow + ix..irow + ix + len];
                                        for (yv, &xv) in yr.iter_mut().zip(xr) {
                                            *yv += wv * xv;
                                        }
                                    } else {
                                        for (j, yv) in yr.iter_mut().enumerate() {
                                            *yv += wv * xp[irow + ix + j * sx];
                                        }
                                    }
                                });
                            }
                        }
                    }
                }
            }
        }
    }
}

/// gx += Wᵀ * gy. This is also the forward map of the transposed convolution.
fn core_backward_data<T: Real>(gy: &[T], w: &[T], g: &Geom, gx: &mut [T]) {
    let (ip, op) = (g.in_plane(), g.out_plane());
    let taps = g.k.iter().product::<usize>();
    let (cin_pg, cout_pg) = (g.cin_pg(), g.cout_pg());
    let sx = g.s[0];
    for b in 0..g.batch {
        for grp in 0..g.groups {
            for cl in 0..cin_pg {
                let c = grp * cin_pg + cl;
                let xp = &mut gx[(b * g.cin + c) * ip..(b * g.cin + c + 1) * ip];
                for ol in 0..cout_pg {
                    let o = grp * cout_pg + ol;
                    let yp = &gy[(b * g.cout + o) * op..(b * g.cout + o + 1) * op];
                    let wb = (o * cin_pg + cl) * taps;
                    if g.pointwise() {
                        let wv = w[wb];
                        for (xv, &yv) in xp.iter_mut().zip(yp) {
                            *xv += wv * yv;
                        }
                        continue;
                    }
                    let mut t = 0;
                    for kz in 0..g.k[2] {
                        for ky in 0..g.k[1] {
                            for kx in 0..g.k[0] {
                                let wv = w[wb + t];
                                t += 1;
                                for_each_row(g, kx, ky, kz, |orow, irow, ox, len, ix| {
                                    let yr = &yp[orow + ox..orow + ox + len];
                                    if sx == 1 {
                                        let xr = &mut xp[irow + ix..irow + ix + len];
                                        for (xv, &yv) in xr.iter_mut().zip(yr) {
                                            *xv += wv * yv;
                                        }
                                    } else {
                                        for (j, &yv) in yr.iter().enumerate() {
                                            xp[irow + ix + j * sx] += wv * yv;
                                        }
                                    }
                                });
                            }
                        }
                    }
                }
            }
        }
    }
}

/// gw += gy ⋆ x.
fn core_backward_weight<T: Real>(x: &[T], gy: &[T], g: &Geom, gw: &mut [T]) {
    let (ip, op) = (g.in_plane(), g.out_plane());
    let taps = g.k.iter().product::<usize>();
    let (cin_pg, cout_pg) = (g.cin_pg(), g.cout_pg());
    let sx = g.s[0];
    for b in 0..g.batch {
        for grp in 0..g.groups {
            for ol in 0..cout_pg {
                let o = grp * cout_pg + ol;
                let yp = &gy[(b * g.cout + o) * op..(b * g.cout + o + 1) * op];
                for cl in 0..cin_pg {
                    let c = grp * cin_pg + cl;
                    let xp = &x[(b * g.cin + c) * ip..(b * g.cin + c + 1) * ip];
                    let wb = (o * cin_pg + cl) * taps;
                    if g.pointwise() {
                        gw[wb] += yp.iter().zip(xp).fold(T::zero(), |a, (&u, &v)| a + u * v);
                        continue;
                    }
                    let mut t = 0;
                    for kz in 0..g.k[2] {
                        for ky in 0..g.k[1] {
                            for kx in 0..g.k[0] {
                                let mut acc = T::zero();
                                for_each_row(g, kx, ky, kz, |orow, irow, ox, len, ix| {
                                    let yr = &yp[orow + ox..orow + ox + len];
                                    if sx == 1 {
                                        let xr = &xp[irow + ix..irow + ix + len];
                                        acc += yr.iter().zip(xr).fold(T::zero(), |a, (&u, &v)| a + u * v);
                                    } else {
                                        for (j, &yv) in yr.iter().enumerate() {
                                            acc += yv * xp[irow + ix + j * sx];
                                        }
                                    }
                                });
                                gw[wb + t] += acc;
                                t += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_geom<T: Real>(x_shape: [usize; 5], k: &ConvKernel<T>, padding: Padding) -> Result<Geom> {
    k.validate()?;
    if x_shape[1] != k.in_ch() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, kernel expects {}",
            x_shape[1],
            k.in_ch()
        )));
    }
    let ins = [x_shape[2], x_shape[3], x_shape[4]];
    let p = padding.amount(k.size);
    Ok(Geom {
        batch: x_shape[0],
        cin: k.in_ch(),
        cout: k.out_ch,
        groups: k.groups,
        ins,
        outs: out_dims(ins, k.size, k.stride, p)?,
        k: k.size,
        s: k.stride,
        p,
    })
}

fn add_bias<T: Real>(y: &mut Tensor<T>, bias: &[T]) {
    let [nb, nc, ..] = y.shape();
    for b in 0..nb {
        for c in 0..nc {
            let bv = bias[c];
            if bv != T::zero() {
                y.plane_mut(b, c).iter_mut().for_each(|v| *v += bv);
            }
        }
    }
}

fn channel_sums<T: Real>(t: &Tensor<T>) -> Vec<T> {
    let [nb, nc, ..] = t.shape();
    let mut out = vec![T::zero(); nc];
    for b in 0..nb {
        for (c, o) in out.iter_mut().enumerate() {
            *o += t.plane(b, c).iter().copied().sum::<T>();
        }
    }
    out
}

pub fn conv3d_forward<T: Real>(x: &Tensor<T>, k: &ConvKernel<T>, padding: Padding) -> Result<Tensor<T>> {
    let g = conv_geom(x.shape(), k, padding)?;
    let mut y = Tensor::zeros([g.batch, g.cout, g.outs[0], g.outs[1], g.outs[2]]);
    core_forward(x.data(), &k.weights, &g, y.data_mut());
    add_bias(&mut y, &k.bias);
    Ok(y)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

pub fn conv3d_backward<T: Real>(
    x: &Tensor<T>,
    k: &ConvKernel<T>,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = conv_geom(x.shape(), k, padding)?;
    let expect = [g.batch, g.cout, g.outs[0], g.outs[1], g.outs[2]];
    if grad_out.shape() != expect {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?}, expected {expect:?}",
            grad_out.shape()
        )));
    }
    let mut grad_x = Tensor::zeros(x.shape());
    core_backward_data(grad_out.data(), &k.weights, &g, grad_x.data_mut());
    let mut grad_w = vec![T::zero(); k.weights.len()];
    core_backward_weight(x.data(), grad_out.data(), &g, &mut grad_w);
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b: channel_sums(grad_out),
    })
}

/// Transposed convolution, the adjoint of a strided dense convolution.
///
/// `weights` use the layout `[in_ch][out_ch][kz][ky][kx]`, which is exactly the
/// weight layout of the forward convolution mapping `out_ch -> in_ch`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose3d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub size: [usize; 3],
    pub stride: [usize; 3],
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvTranspose3d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, size: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            size: [size; 3],
            stride: [stride; 3],
            weights: vec![T::zero(); in_ch * out_ch * size * size * size],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// The forward convolution this layer is the adjoint of (bias dropped).
    pub fn adjoint_conv(&self) -> ConvKernel<T> {
        ConvKernel {
            out_ch: self.in_ch,
            in_per_group: self.out_ch,
            size: self.size,
            groups: 1,
            stride: self.stride,
            weights: self.weights.clone(),
            bias: vec![T::zero(); self.in_ch],
        }
    }

    fn geom(&self, y_shape: [usize; 5], out_spatial: [usize; 3], padding: Padding) -> Result<Geom> {
        if self.bias.len() != self.out_ch
            || self.weights.len() != self.in_ch * self.out_ch * self.size.iter().product::<usize>()
        {
            return Err(Error::ShapeMismatch("transposed kernel parameter count".into()));
        }
        if y_shape[1] != self.in_ch {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, transposed kernel expects {}",
                y_shape[1], self.in_ch
            )));
        }
        let p = padding.amount(self.size);
        let outs = out_dims(out_spatial, self.size, self.stride, p)?;
        if outs != [y_shape[2], y_shape[3], y_shape[4]] {
            return Err(Error::ShapeMismatch(format!(
                "output size {out_spatial:?} is not an adjoint shape for input {:?}",
                &y_shape[2..]
            )));
        }
        Ok(Geom {
            batch: y_shape[0],
            cin: self.out_ch,
            cout: self.in_ch,
            groups: 1,
            ins: out_spatial,
            outs,
            k: self.size,
            s: self.stride,
            p,
        })
    }
}

pub fn conv_transpose3d_forward<T: Real>(
    y: &Tensor<T>,
    k: &ConvTranspose3d<T>,
    padding: Padding,
    out_spatial: [usize; 3],
) -> Result<Tensor<T>> {
    let g = k.geom(y.shape(), out_spatial, padding)?;
    let mut z = Tensor::zeros([g.batch, k.out_ch, out_spatial[0], out_spatial[1], out_spatial[2]]);
    core_backward_data(y.data(), &k.weights, &g, z.data_mut());
    add_bias(&mut z, &k.bias);
    Ok(z)
}

pub fn conv_transpose3d_backward<T: Real>(
    y: &Tensor<T>,
    k: &ConvTranspose3d<T>,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = k.geom(y.shape(), grad_out.spatial(), padding)?;
    if grad_out.shape()[..2] != [g.batch, k.out_ch] {
        return Err(Error::ShapeMismatch("transposed grad_out channels".into()));
    }
    let mut grad_x = Tensor::zeros(y.shape());
    core_forward(grad_out.data(), &k.weights, &g, grad_x.data_mut());
    let mut grad_w = vec![T::zero(); k.weights.len()];
    core_backward_weight(grad_out.data(), y.data(), &g, &mut grad_w);
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b: channel_sums(grad_out),
    })
}
