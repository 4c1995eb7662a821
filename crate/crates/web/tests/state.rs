use seedforge_web::{DemoState, Layer};

fn demo() -> DemoState {
    DemoState::new(48, 9.0, 0.6, 0.03, 4, "P,Sm,W,Me,gc").unwrap()
}

#[test]
fn phantom_seeds_and_segments() {
    let d = demo();
    let s = d.summary();
    assert_eq!((d.width(), d.height()), (48, 48));
    assert_eq!(s.revision, 1);
    assert!(s.fg_seeds > 0 && s.bg_seeds > 0);
    assert!(s.dice.unwrap() > 0.85);
    assert!(s.has_saliency);
}

#[test]
fn layers_render_rgba() {
    let d = demo();
    for layer in ["segmentation", "saliency", "strength"] {
        let px = d.render(layer.parse::<Layer>().unwrap());
        assert_eq!(px.len(), 48 * 48 * 4, "{layer}");
        assert!(px.chunks(4).all(|p| p[3] == 255));
    }
    assert!("edges".parse::<Layer>().is_err());
}

#[test]
fn scribble_then_undo() {
    let mut d = demo();
    let before = d.session().labels().clone();
    let flipped = d.scribble(true, &[(3, 3), (6, 3), (-5, -5)], 1).unwrap();
    assert!(flipped > 0);
    assert!(d.session().labels().is_fg(3 * 48 + 3));
    assert_eq!(d.summary().revision, 2);
    assert_eq!(d.undo().unwrap(), flipped);
    assert_eq!(d.session().labels(), &before);
    assert!(d.undo().is_err());
}

#[test]
fn off_image_stroke_is_rejected() {
    let mut d = demo();
    assert!(d.scribble(false, &[(-10, -10)], 2).is_err());
    assert_eq!(d.summary().revision, 1);
}

#[test]
fn reconfigure_keeps_phantom() {
    let mut d = demo();
    d.scribble(true, &[(2, 2)], 0).unwrap();
    d.reconfigure("P,Sg,W,Me,rw").unwrap();
    let s = d.summary();
    assert_eq!(s.config, "P,Sg,W,Me,rw");
    assert_eq!(s.revision, 1);
    assert!(!s.has_saliency);
    assert!(d.reconfigure("P,Sz").is_err());
}
