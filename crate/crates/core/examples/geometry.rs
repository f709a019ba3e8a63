//! Boxes that leave the frame, and how overlap is measured between them.
//!
//! `cargo run --example geometry`

use unic_kit::geometry::{enclosing_box, intersection_area, iou, union_area};
use unic_kit::losses::giou_loss;
use unic_kit::CompBox;

fn main() -> unic_kit::Result<()> {
    // Coordinates are relative to the initial view: [0, 1]^2 is what the
    // camera currently sees, anything else is outside it.
    let inside = CompBox::new(0.5, 0.5, 0.6, 0.6)?;
    let spilling = CompBox::new(0.9, 0.5, 0.8, 0.6)?;
    let far = CompBox::new(2.5, -1.0, 0.5, 0.5)?;

    println!(
        "spilling box within the initial view: {}",
        spilling.within_unit_square()
    );
    for (name, other) in [("spilling", spilling), ("far", far)] {
        println!(
            "{name:>8}: inter {:.4}  union {:.4}  iou {:.4}  giou loss {:.4}",
            intersection_area(&inside, &other),
            union_area(&inside, &other),
            iou(&inside, &other),
            giou_loss(&inside, &other),
        );
    }
    let hull = enclosing_box(&inside, &far).to_corners();
    println!("enclosing box of inside and far: {:?}", hull.coords());

    if CompBox::new(0.5, 0.5, 0.0, 0.2).is_err() {
        println!("zero-width boxes are rejected at construction");
    }
    Ok(())
}
