//! Hand-assembled images of a PID controller and an SVM classifier.

use crate::isa::{assemble, BinaryImage};

pub const PID_OBJECT: u32 = 0x3_0000;
pub const SVM_ZERO: u32 = 0x206d0;
pub const SVM_SIGMA: u32 = 0x408fc;

const PID_SRC: &str = "
.global 0x30000 0.8    # Kp
.global 0x30004 0.3    # Ki
.global 0x30008 0.05   # Kd
.global 0x3000c 0.0    # prev_err
.global 0x30010 0.0    # integral
.global 0x30014 -10.0  # lo
.global 0x30018 10.0   # hi
.entry main

.func main
    LDI r0, 0x30000
    FLDI s0, 1.5
    FLDI s1, 1.0
    FLDI s2, 0.01
    CALL pid_update
    RET

# saturate(x, xmin, xmax)
.func saturate
    FCMP s0, s2
    BLE in_range
    FMOV s0, s2
    RET
in_range:
    FCMP s0, s1
    BGT done
    FMOV s0, s1
done:
    RET

# r0 = this; s0 = target, s1 = actual, s2 = dt
.func pid_update
    FSUB s3, s0, s1
    FLDP s4, [r0 + 0x10]
    FMUL s5, s2, s3
    FADD s5, s5, s4
    FSTP [r0 + 0x10], s5
    FLDP s4, [r0 + 0xc]
    FSTP [r0 + 0xc], s3
    FSUB s4, s3, s4
    FLDP s6, [r0 + 0x8]
    FDIV s6, s6, s2
    FMUL s6, s6, s4
    FLDP s7, [r0 + 0x0]
    FMUL s7, s7, s3
    FLDP s1, [r0 + 0x4]
    FMUL s1, s1, s5
    FADD s0, s7, s1
    FADD s0, s0, s6
    FLDP s1, [r0 + 0x14]
    FLDP s2, [r0 + 0x18]
    CALL saturate
    RET
";

const SVM_SRC: &str = "
.global 0x206d0 0.0    # zero literal
.global 0x408cc 1.2    # sv[0]
.global 0x408d0 2.3
.global 0x408d4 5.4    # sv[1]
.global 0x408d8 -3.6
.global 0x408dc -7.2   # sv[2]
.global 0x408e0 -2.0
.global 0x408e4 2.7    # a[]
.global 0x408e8 3.1
.global 0x408ec 1.4
.global 0x408f0 1.0    # y[]
.global 0x408f4 -1.0
.global 0x408f8 -1.0
.global 0x408fc 25.6   # s
.global 0x40900 0.4    # b
.entry main

.func main
    FLDI s0, 0.5
    FLDI s1, -1.5
    CALL classify
    RET

# classify(p.x, p.y)
.func classify
    FSTS [sp - 0x4], s8
    FSTS [sp - 0x8], s9
    FSTS [sp - 0xc], s10
    FSTS [sp - 0x10], s11
    SPADJ -16
    FMOV s8, s0
    FMOV s9, s1
    FLDG s10, [0x206d0]
    FLDI s11, 0.0
    LDI r4, 0x408cc
    LDI r5, 0x408e4
    LDI r6, 0x408f0
loop:
    FMOV s0, s8
    FMOV s1, s9
    FLDP s2, [r4 + 0x0]
    FLDP s3, [r4 + 0x4]
    CALL kernel
    FLDP s1, [r5 + 0x0]
    FLDP s2, [r6 + 0x0]
    FMUL s1, s2, s1
    FMUL s0, s1, s0
    FADD s10, s10, s0
    ADDI r4, r4, 8
    ADDI r5, r5, 4
    ADDI r6, r6, 4
    FLDI s4, 1.0
    FADD s11, s11, s4
    FLDI s4, 3.0
    FCMP s11, s4
    BLT loop
    FLDG s0, [0x40900]
    FADD s0, s10, s0
    CALL thresh
    SPADJ 16
    FLDS s11, [sp - 0x10]
    FLDS s10, [sp - 0xc]
    FLDS s9, [sp - 0x8]
    FLDS s8, [sp - 0x4]
    RET

# kernel(p1.x, p1.y, p2.x, p2.y)
.func kernel
    FSUB s0, s0, s2
    FMUL s0, s0, s0
    FSUB s1, s1, s3
    FMUL s1, s1, s1
    FADD s0, s0, s1
    FNEG s0, s0
    FLDG s1, [0x408fc]
    FDIV s0, s0, s1
    CALL expf
    RET

.func thresh
    FLDG s1, [0x206d0]
    FCMP s0, s1
    BLT negative
    FLDI s0, 1.0
    RET
negative:
    FLDI s0, -1.0
    RET
";

/// Image with `main`, `saturate` and `pid_update`.
pub fn pid_image() -> BinaryImage {
    assemble(PID_SRC).expect("pid fixture assembles")
}

/// Image with `main`, `classify`, `kernel` and `thresh`.
pub fn svm_image() -> BinaryImage {
    assemble(SVM_SRC).expect("svm fixture assembles")
}

pub fn pid_source() -> &'static str {
    PID_SRC
}

pub fn svm_source() -> &'static str {
    SVM_SRC
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub image: BinaryImage,
    pub function: &'static str,
}

/// Every fixture function paired with the image that contains it.
pub fn fixtures() -> Vec<Fixture> {
    let pid = pid_image();
    let svm = svm_image();
    let f = |name, image: &BinaryImage, function| Fixture { name, image: image.clone(), function };
    vec![
        f("saturate", &pid, "saturate"),
        f("pid_update", &pid, "pid_update"),
        f("svm_kernel", &svm, "kernel"),
        f("svm_thresh", &svm, "thresh"),
        f("svm_classify", &svm, "classify"),
        f("svm_main", &svm, "main"),
    ]
}
